"""Websocket and HTTP transport: binds the hub to real connections.

One aiohttp application serves the JSON frame protocol on ``/ws``, a
small token-authenticated JSON API under ``/api`` for the folder flows
(classes, documents, create/delete), and, when a static directory is
configured, the web client's assets. Each websocket text message is one
frame; the single event loop serializes all hub mutations, satisfying
the per-room ordering contract.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from pathlib import Path
from typing import Optional

from aiohttp import WSMsgType, web

from .config import Config
from .errors import AuthFailed, NoSuchClass, NoSuchDocument, NoSuchUser, NoteBridgeError
from .server import Effects, Hub
from .storage import Store, UserAccount

log = logging.getLogger("notebridge.ws")


def _now_ms() -> int:
    return int(time.time() * 1000)


class WsTransport:
    def __init__(self, hub: Hub, config: Config,
                 static_dir: Optional[Path] = None):
        self.hub = hub
        self.config = config
        self.static_dir = static_dir
        self.sockets: dict[str, web.WebSocketResponse] = {}
        self._next_cid = 0

    async def _deliver(self, fx: Effects) -> None:
        for cid, frame in fx.sends:
            ws = self.sockets.get(cid)
            if ws is not None and not ws.closed:
                await ws.send_str(json.dumps(frame, ensure_ascii=False))
        for cid in fx.closes:
            ws = self.sockets.pop(cid, None)
            if ws is not None and not ws.closed:
                await ws.close()

    async def websocket_handler(self, request: web.Request) -> web.WebSocketResponse:
        ws = web.WebSocketResponse(heartbeat=self.config.heartbeat_s,
                                   receive_timeout=self.config.idle_timeout_s)
        await ws.prepare(request)
        self._next_cid += 1
        cid = f"w{self._next_cid}"
        self.sockets[cid] = ws
        log.info("connection %s opened", cid)
        try:
            async for msg in ws:
                if msg.type != WSMsgType.TEXT:
                    continue
                try:
                    frame = json.loads(msg.data)
                except json.JSONDecodeError:
                    await ws.send_str(json.dumps(
                        {"t": "error", "code": "malformed_frame",
                         "msg": "frame is not valid JSON"}))
                    continue
                fx = self.hub.handle_frame(cid, frame, _now_ms())
                await self._deliver(fx)  # closes our socket if the hub said so
        except asyncio.TimeoutError:
            log.info("connection %s idle timeout", cid)
        finally:
            self.sockets.pop(cid, None)
            await self._deliver(self.hub.disconnect(cid, _now_ms()))
            log.info("connection %s closed", cid)
        return ws

    async def index_handler(self, request: web.Request) -> web.StreamResponse:
        if self.static_dir is None:
            return web.Response(text="notebridge sync server\n")
        index = self.static_dir / "index.html"
        if not index.exists():
            return web.Response(status=404, text="no web client built\n")
        return web.FileResponse(index)

    # -- folder-flow JSON API (same bearer tokens as the ws protocol) --

    def _caller(self, request: web.Request) -> UserAccount:
        auth = request.headers.get("Authorization", "")
        if not auth.startswith("Bearer "):
            raise AuthFailed("missing bearer token")
        return self.hub.store.authenticate(auth[len("Bearer "):])

    async def api_login(self, request: web.Request) -> web.Response:
        body = await request.json()
        account = self.hub.store.authenticate(str(body.get("token", "")))
        return web.json_response({"user_id": account.user_id,
                                  "name": account.display_name,
                                  "role": account.role.value})

    async def api_classes(self, request: web.Request) -> web.Response:
        account = self._caller(request)
        classes = self.hub.store.list_classes(account.user_id)
        return web.json_response([{"class_id": c.class_id, "name": c.name}
                                  for c in classes])

    async def api_docs(self, request: web.Request) -> web.Response:
        account = self._caller(request)
        class_id = request.match_info["class_id"]
        if not self.hub.store.user_enrolled(account.user_id, class_id):
            raise AuthFailed("not enrolled in this class")
        docs = self.hub.store.list_documents(class_id)
        return web.json_response([
            {"doc_id": m.doc_id, "title": m.title, "created_at": m.created_at,
             "created_by": m.created_by}
            for m in docs
        ])

    async def api_create_doc(self, request: web.Request) -> web.Response:
        account = self._caller(request)
        class_id = request.match_info["class_id"]
        body = await request.json()
        meta = self.hub.store.create_document(class_id,
                                              str(body.get("title", "")),
                                              account.user_id)
        return web.json_response({"doc_id": meta.doc_id, "title": meta.title})

    async def api_delete_doc(self, request: web.Request) -> web.Response:
        account = self._caller(request)
        meta = self.hub.store.delete_document(request.match_info["doc_id"],
                                              account.user_id)
        return web.json_response({"doc_id": meta.doc_id, "deleted": True})

    @staticmethod
    @web.middleware
    async def error_middleware(request: web.Request, handler):
        try:
            return await handler(request)
        except AuthFailed as exc:
            return web.json_response({"code": exc.code, "msg": str(exc)},
                                     status=401)
        except (NoSuchClass, NoSuchDocument, NoSuchUser) as exc:
            return web.json_response({"code": exc.code, "msg": str(exc)},
                                     status=404)
        except NoteBridgeError as exc:
            return web.json_response({"code": exc.code, "msg": str(exc)},
                                     status=400)
        except json.JSONDecodeError:
            return web.json_response({"code": "malformed_frame",
                                      "msg": "body is not valid JSON"},
                                     status=400)

    def build_app(self) -> web.Application:
        app = web.Application(middlewares=[self.error_middleware])
        app.router.add_get("/ws", self.websocket_handler)
        app.router.add_post("/api/login", self.api_login)
        app.router.add_get("/api/classes", self.api_classes)
        app.router.add_get("/api/classes/{class_id}/docs", self.api_docs)
        app.router.add_post("/api/classes/{class_id}/docs", self.api_create_doc)
        app.router.add_delete("/api/docs/{doc_id}", self.api_delete_doc)
        app.router.add_get("/", self.index_handler)
        if self.static_dir is not None and self.static_dir.exists():
            app.router.add_static("/", self.static_dir)
        return app


def serve(config: Config, static_dir: Optional[Path] = None) -> None:
    """Run the sync server until interrupted."""
    store = Store(Path(config.data_dir), fsync=config.fsync)
    hub = Hub(store, snapshot_every=config.snapshot_every)
    transport = WsTransport(hub, config, static_dir)
    host, _, port = config.addr.rpartition(":")
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    log.info("serving %s on %s (data under %s)", config.addr, host or "0.0.0.0",
             config.data_dir)
    web.run_app(transport.build_app(), host=host or "0.0.0.0", port=int(port))
