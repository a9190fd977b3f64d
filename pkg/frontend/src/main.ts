import { ReviewApi } from "./api.js";
import { ReviewSession } from "./session.js";
import { ReviewView } from "./render.js";

function reviewerId(): string {
  const stored = window.localStorage.getItem("reviewer");
  if (stored) return stored;
  const entered = window.prompt("Reviewer id (anonymous handle):") ?? "anonymous";
  const id = entered.trim() || "anonymous";
  window.localStorage.setItem("reviewer", id);
  return id;
}

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");
const api = new ReviewApi("");
const session = new ReviewSession(api, reviewerId());
void new ReviewView(root, api, session).start();
