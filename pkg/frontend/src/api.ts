// REST client for login and the folder screens.

export interface Identity {
  user_id: string;
  name: string;
  role: "swd" | "pnt";
}

export interface ClassEntry {
  class_id: string;
  name: string;
}

export interface DocEntry {
  doc_id: string;
  title: string;
  created_at: number;
  created_by: string;
}

export class Api {
  constructor(private token: string, private base = "") {}

  private async call(method: string, path: string, body?: unknown) {
    const resp = await fetch(this.base + path, {
      method,
      headers: {
        "Authorization": `Bearer ${this.token}`,
        "Content-Type": "application/json",
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await resp.json();
    if (!resp.ok) {
      throw new Error(data.msg ?? `${resp.status}`);
    }
    return data;
  }

  static async login(token: string, base = ""): Promise<Identity> {
    const resp = await fetch(`${base}/api/login`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ token }),
    });
    const data = await resp.json();
    if (!resp.ok) throw new Error(data.msg ?? "login failed");
    return data as Identity;
  }

  classes(): Promise<ClassEntry[]> {
    return this.call("GET", "/api/classes");
  }

  docs(classId: string): Promise<DocEntry[]> {
    return this.call("GET", `/api/classes/${classId}/docs`);
  }

  createDoc(classId: string, title: string): Promise<{ doc_id: string }> {
    return this.call("POST", `/api/classes/${classId}/docs`, { title });
  }

  deleteDoc(docId: string): Promise<void> {
    return this.call("DELETE", `/api/docs/${docId}`);
  }
}
