"""Operator CLI: serve, administer users/classes/documents, export notes,
run analytics, run simulations.

Exit codes: 0 success, 1 domain error (one greppable ``code: message``
line on stderr), 2 usage error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import engine
from .analytics import paired_item_stats, read_paired_csv, summarize_usage
from .config import Config
from .docmodel import export_txt
from .errors import NoteBridgeError
from .sim import NetConfig, load_scenario, run_fuzz, run_scripted
from .storage import Role, Store, UsageEvent


def domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NoteBridgeError as exc:
            click.echo(f"{exc.code}: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.option("--data-dir", default=None, help="Store location (default ./data).")
@click.option("--config", "config_path", default=None,
              help="Config file path (or NOTEBRIDGE_CONFIG).")
@click.pass_context
def main(ctx, data_dir, config_path):
    """NoteBridge collaborative note-taking: server and tooling."""
    ctx.obj = Config.load(config_path, data_dir=data_dir)


def _store(ctx) -> Store:
    return Store(Path(ctx.obj.data_dir), fsync=ctx.obj.fsync)


@main.command()
@click.option("--addr", default=None, help="listen address host:port")
@click.option("--data-dir", default=None, help="store location")
@click.option("--snapshot-every", type=int, default=None,
              help="ops between durable snapshots")
@click.option("--static-dir", default=None,
              help="directory of web client assets to serve")
@click.pass_context
@domain_errors
def serve(ctx, addr, data_dir, snapshot_every, static_dir):
    """Run the sync server."""
    from .ws import serve as ws_serve

    cfg = ctx.obj
    if addr:
        cfg.addr = addr
    if data_dir:
        cfg.data_dir = data_dir
    if snapshot_every:
        cfg.snapshot_every = snapshot_every
    ws_serve(cfg, Path(static_dir) if static_dir else None)


@main.group()
def user():
    """Manage user accounts."""


@user.command("add")
@click.option("--name", required=True)
@click.option("--role", required=True, type=click.Choice(["swd", "pnt"]))
@click.pass_context
@domain_errors
def user_add(ctx, name, role):
    """Create an account and print its bearer token (shown only once)."""
    account, token = _store(ctx).create_user(name, Role(role))
    click.echo(f"{account.user_id} {account.display_name} ({account.role.value})")
    click.echo(f"token: {token}")


@main.group("class")
def class_group():
    """Manage class folders."""


@class_group.command("add")
@click.option("--name", required=True)
@click.pass_context
@domain_errors
def class_add(ctx, name):
    folder = _store(ctx).create_class(name)
    click.echo(f"{folder.class_id} {folder.name}")


@class_group.command("enroll")
@click.option("--class", "class_id", required=True)
@click.option("--user", "user_id", required=True)
@click.pass_context
@domain_errors
def class_enroll(ctx, class_id, user_id):
    folder = _store(ctx).enroll(class_id, user_id)
    click.echo(f"{folder.class_id} members: {', '.join(sorted(folder.members))}")


@main.group()
def doc():
    """Inspect and export documents."""


@doc.command("list")
@click.option("--class", "class_id", required=True)
@click.pass_context
@domain_errors
def doc_list(ctx, class_id):
    for meta in _store(ctx).list_documents(class_id):
        click.echo(f"{meta.doc_id}  {meta.title}  (by {meta.created_by})")


@doc.command("export")
@click.option("--doc", "doc_id", required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@domain_errors
def doc_export(ctx, doc_id, out):
    """Export a document as plain txt (replayed from its op log)."""
    store = _store(ctx)
    meta = store.get_document(doc_id)
    ops = [engine.op_from_dict(d) for _s, d in store.read_ops(doc_id)]
    document = engine.replay(doc_id, meta.title, ops).document()
    Path(out).write_bytes(export_txt(document))
    click.echo(f"wrote {out}")


@main.group()
def analyze():
    """Usage and questionnaire analytics."""


@analyze.command("usage")
@click.option("--log", "log_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--pairs", "pairs_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--csv", "as_csv", is_flag=True, help="emit CSV instead of a table")
@domain_errors
def analyze_usage(log_path, pairs_path, as_csv):
    """Per-pair usage counts from a usage.jsonl log."""
    events = []
    with open(log_path, encoding="utf-8") as f:
        for line in f:
            events.append(UsageEvent.from_dict(json.loads(line)))
    pair_map = json.loads(Path(pairs_path).read_text("utf-8"))
    rows = summarize_usage(events, pair_map)
    if as_csv:
        click.echo("pair,notes_written,emojis_total,nt_used,cc_used")
        for r in rows:
            click.echo(f"{r.pair_id},{r.notes_written},{r.emojis_total},"
                       f"{r.nt_used},{r.cc_used}")
    else:
        click.echo(f"{'pair':<6}{'notes':>7}{'emojis':>8}{'nt':>6}{'cc':>6}")
        for r in rows:
            click.echo(f"{r.pair_id:<6}{r.notes_written:>7}{r.emojis_total:>8}"
                       f"{r.nt_used:>6}{r.cc_used:>6}")


@analyze.command("paired")
@click.option("--csv", "csv_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@domain_errors
def analyze_paired(csv_path):
    """Median/IQR and Wilcoxon signed-rank per questionnaire item.

    Input header: item,pre,post; one row per respondent and item.
    """
    stats = paired_item_stats(read_paired_csv(csv_path))
    click.echo(f"{'item':<8}{'n':>4}{'pre md':>8}{'pre iqr':>9}"
               f"{'post md':>9}{'post iqr':>10}{'p':>10}{'':>2}")
    for s in stats:
        p = "all-tied" if s.p_two_sided is None else f"{s.p_two_sided:.4f}"
        click.echo(f"{s.item:<8}{s.n:>4}{s.pre_median:>8g}{s.pre_iqr:>9g}"
                   f"{s.post_median:>9g}{s.post_iqr:>10g}{p:>10}")


@main.command()
@click.option("--scenario", "scenario_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--fuzz", "fuzz_mode", is_flag=True)
@click.option("--clients", type=int, default=3)
@click.option("--ops", type=int, default=50)
@click.option("--seed", type=int, default=0)
@click.option("--drop", type=float, default=0.0)
@click.option("--duplicate", type=float, default=0.0)
@click.option("--reorder", type=int, default=0)
@click.option("--latency", default="5:50", help="min:max ms")
@click.option("--partition", default=None,
              help="start:end:client[,client...] ms window cut off from server")
@click.option("--json", "as_json", is_flag=True)
@click.option("--keep-data-dir", default=None,
              help="run against this directory so results can be inspected")
@click.pass_context
@domain_errors
def simulate(ctx, scenario_path, fuzz_mode, clients, ops, seed, drop,
             duplicate, reorder, latency, partition, as_json, keep_data_dir):
    """Run a scripted scenario or a convergence fuzz under simulated faults."""
    if bool(scenario_path) == fuzz_mode:
        raise click.UsageError("choose exactly one of --scenario or --fuzz")
    lo, _, hi = latency.partition(":")
    partitions = []
    if partition:
        start, end, members = partition.split(":", 2)
        partitions.append((int(start), int(end),
                           frozenset(members.split(","))))
    net = NetConfig(seed=seed, latency_ms=(int(lo), int(hi)), drop_prob=drop,
                    duplicate_prob=duplicate, reorder_window=reorder,
                    partitions=partitions)
    data_dir = Path(keep_data_dir) if keep_data_dir else None
    if fuzz_mode:
        report = run_fuzz(clients, ops, net, data_dir=data_dir)
    else:
        report = run_scripted(load_scenario(scenario_path), net,
                              data_dir=data_dir)
    click.echo(report.to_json() if as_json else report.summary())
    if not report.converged:
        sys.exit(1)
