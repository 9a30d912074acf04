// Folder screens: My Class (list of classes) and My Documents (list,
// create with a title field, trashcan delete with check/X confirmation).

import { Api, ClassEntry, DocEntry } from "./api.js";

export function renderClasses(host: HTMLElement, classes: ClassEntry[],
                              onOpen: (c: ClassEntry) => void): void {
  host.textContent = "";
  const h = document.createElement("h2");
  h.textContent = "My Class";
  host.appendChild(h);
  const list = document.createElement("div");
  list.className = "folder-list";
  if (!classes.length) {
    const empty = document.createElement("p");
    empty.textContent = "You are not enrolled in any class yet.";
    list.appendChild(empty);
  }
  for (const cls of classes) {
    const row = document.createElement("button");
    row.className = "folder-row";
    row.textContent = `📁 ${cls.name}`;
    row.addEventListener("click", () => onOpen(cls));
    list.appendChild(row);
  }
  host.appendChild(list);
}

export async function renderDocuments(
  host: HTMLElement,
  api: Api,
  cls: ClassEntry,
  onOpenDoc: (doc: DocEntry) => void,
  onBack: () => void,
): Promise<void> {
  host.textContent = "";

  const head = document.createElement("div");
  head.className = "docs-head";
  const back = document.createElement("button");
  back.textContent = "← My Class";
  back.addEventListener("click", onBack);
  const h = document.createElement("h2");
  h.textContent = `My Documents — ${cls.name}`;

  const createBox = document.createElement("div");
  createBox.className = "create-box";
  const titleInput = document.createElement("input");
  titleInput.placeholder = "Note title";
  const createBtn = document.createElement("button");
  createBtn.textContent = "Create";
  createBtn.addEventListener("click", async () => {
    const title = titleInput.value.trim();
    if (!title) return;
    await api.createDoc(cls.class_id, title);
    titleInput.value = "";
    await renderDocuments(host, api, cls, onOpenDoc, onBack);
  });
  createBox.append(titleInput, createBtn);
  head.append(back, h, createBox);
  host.appendChild(head);

  const list = document.createElement("div");
  list.className = "folder-list";
  host.appendChild(list);

  const docs = await api.docs(cls.class_id);
  if (!docs.length) {
    const empty = document.createElement("p");
    empty.textContent = "No notes yet — create one above.";
    list.appendChild(empty);
  }
  for (const doc of docs) {
    list.appendChild(docRow(doc, api, () => onOpenDoc(doc), () =>
      renderDocuments(host, api, cls, onOpenDoc, onBack)));
  }
}

function docRow(doc: DocEntry, api: Api, onOpen: () => void,
                refresh: () => void): HTMLElement {
  const row = document.createElement("div");
  row.className = "doc-row";

  const open = document.createElement("button");
  open.className = "folder-row";
  open.textContent = `📄 ${doc.title}`;
  open.addEventListener("click", onOpen);
  row.appendChild(open);

  const trash = document.createElement("button");
  trash.className = "trash";
  trash.title = "Delete this note";
  trash.textContent = "🗑";
  row.appendChild(trash);

  const confirm = document.createElement("span");
  confirm.className = "confirm hidden";
  const yes = document.createElement("button");
  yes.textContent = "✓";
  yes.title = "Confirm deletion";
  const no = document.createElement("button");
  no.textContent = "✕";
  no.title = "Cancel deletion";
  confirm.append(yes, no);
  row.appendChild(confirm);

  trash.addEventListener("click", () => {
    confirm.classList.remove("hidden");
    trash.classList.add("hidden");
  });
  no.addEventListener("click", () => {
    confirm.classList.add("hidden");
    trash.classList.remove("hidden");
  });
  yes.addEventListener("click", async () => {
    await api.deleteDoc(doc.doc_id);
    refresh();
  });
  return row;
}
