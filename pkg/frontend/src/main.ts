/** Entry point: wire the session client to the page and start annotating. */

import { SessionClient } from "./session.js";
import { AnnotationView } from "./ui.js";

function annotatorId(): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("annotator");
  if (fromQuery) {
    window.localStorage.setItem("sxs-annotator-id", fromQuery);
    return fromQuery;
  }
  const stored = window.localStorage.getItem("sxs-annotator-id");
  if (stored) return stored;
  const generated = `annotator-${Math.random().toString(36).slice(2, 10)}`;
  window.localStorage.setItem("sxs-annotator-id", generated);
  return generated;
}

function start(): void {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  const session = new SessionClient(
    "",
    annotatorId(),
    (url, init) => window.fetch(url, init),
    window.localStorage,
  );
  const view = new AnnotationView(root, session);
  void view.loadNext();
}

document.addEventListener("DOMContentLoaded", start);
