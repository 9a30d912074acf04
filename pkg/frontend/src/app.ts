// Application shell: login, class and document screens, editor.

import { Api, ClassEntry, DocEntry, Identity } from "./api.js";
import { DocConnection } from "./connection.js";
import { openEditor } from "./editor.js";
import { renderClasses, renderDocuments } from "./folders.js";

const TOKEN_KEY = "notebridge.token";

class App {
  private host: HTMLElement;
  private api: Api | null = null;
  private me: Identity | null = null;
  private token: string | null = null;
  private conn: DocConnection | null = null;

  constructor(host: HTMLElement) {
    this.host = host;
  }

  async start(): Promise<void> {
    const saved = localStorage.getItem(TOKEN_KEY);
    if (saved) {
      try {
        this.me = await Api.login(saved);
        this.token = saved;
        this.api = new Api(saved);
        return this.showClasses();
      } catch {
        localStorage.removeItem(TOKEN_KEY);
      }
    }
    this.showLogin();
  }

  private showLogin(error?: string): void {
    this.leaveEditor();
    this.host.textContent = "";
    const box = document.createElement("div");
    box.className = "login-box";
    const h = document.createElement("h1");
    h.textContent = "NoteBridge";
    const p = document.createElement("p");
    p.textContent = "Paste your access token to log in.";
    const input = document.createElement("input");
    input.type = "password";
    input.placeholder = "access token";
    const btn = document.createElement("button");
    btn.textContent = "Log in";
    const err = document.createElement("p");
    err.className = "error";
    err.textContent = error ?? "";
    const submit = async () => {
      try {
        this.me = await Api.login(input.value.trim());
        this.token = input.value.trim();
        this.api = new Api(this.token);
        localStorage.setItem(TOKEN_KEY, this.token);
        this.showClasses();
      } catch (e) {
        err.textContent = (e as Error).message;
      }
    };
    btn.addEventListener("click", submit);
    input.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter") submit();
    });
    box.append(h, p, input, btn, err);
    this.host.appendChild(box);
  }

  private logout = (): void => {
    localStorage.removeItem(TOKEN_KEY);
    this.token = null;
    this.me = null;
    this.api = null;
    this.showLogin();
  };

  private async showClasses(): Promise<void> {
    this.leaveEditor();
    const classes = await this.api!.classes();
    this.host.textContent = "";
    const bar = this.userBar();
    this.host.appendChild(bar);
    const screen = document.createElement("div");
    this.host.appendChild(screen);
    renderClasses(screen, classes, (cls) => this.showDocuments(cls));
  }

  private async showDocuments(cls: ClassEntry): Promise<void> {
    this.leaveEditor();
    this.host.textContent = "";
    this.host.appendChild(this.userBar());
    const screen = document.createElement("div");
    this.host.appendChild(screen);
    await renderDocuments(screen, this.api!, cls,
                          (doc) => this.showEditor(doc),
                          () => this.showClasses());
  }

  private showEditor(doc: DocEntry): void {
    this.leaveEditor();
    this.host.textContent = "";
    const back = document.createElement("button");
    back.className = "back-to-docs";
    back.textContent = "← My Documents";
    back.addEventListener("click", () => this.showClasses());
    this.host.appendChild(back);
    const screen = document.createElement("div");
    this.host.appendChild(screen);
    this.conn = openEditor(screen, this.token!, doc.doc_id, this.me!,
                           this.logout);
  }

  private leaveEditor(): void {
    this.conn?.stop();
    this.conn = null;
  }

  private userBar(): HTMLElement {
    const bar = document.createElement("div");
    bar.className = "userbar";
    const who = document.createElement("span");
    who.textContent = `${this.me!.name} (${this.me!.role})`;
    const out = document.createElement("button");
    out.textContent = "Log out";
    out.addEventListener("click", this.logout);
    bar.append(who, out);
    return bar;
  }
}

new App(document.getElementById("app")!).start();
