import { HttpApi } from "./api";
import { applyOverlay } from "./overlay";
import { ReviewSession } from "./review";
import "./style.css";

const api = new HttpApi();
const session = new ReviewSession(api);

const app = document.getElementById("app")!;
app.innerHTML = `
  <header>
    <h1>Region description review</h1>
    <span id="stats"></span>
  </header>
  <div id="banner" hidden></div>
  <main id="viewer" hidden>
    <div class="image-pane">
      <div class="image-wrap">
        <img id="photo" alt="face under review" />
        <div id="highlight"></div>
      </div>
      <div class="meta">
        <span id="task" class="badge"></span>
        <span id="label" class="badge"></span>
        <span id="item-id"></span>
      </div>
    </div>
    <div class="text-pane">
      <textarea id="description" spellcheck="false"></textarea>
      <div class="actions">
        <button id="approve" title="A">Approve <kbd>A</kbd></button>
        <button id="edit" title="E">Save edit <kbd>E</kbd></button>
        <button id="reject" title="R">Reject <kbd>R</kbd></button>
        <span class="nav">
          <button id="prev" title="left arrow">&#8592;</button>
          <button id="next" title="right arrow">&#8594;</button>
        </span>
      </div>
    </div>
  </main>
  <p id="empty" hidden>Queue is empty - nothing left to review.</p>
`;

const el = {
  banner: document.getElementById("banner")!,
  viewer: document.getElementById("viewer")!,
  empty: document.getElementById("empty")!,
  photo: document.getElementById("photo") as HTMLImageElement,
  highlight: document.getElementById("highlight")!,
  task: document.getElementById("task")!,
  label: document.getElementById("label")!,
  itemId: document.getElementById("item-id")!,
  description: document.getElementById("description") as HTMLTextAreaElement,
  stats: document.getElementById("stats")!,
};

function banner(message: string | null) {
  el.banner.hidden = message === null;
  el.banner.textContent = message ?? "";
}

async function refreshStats() {
  try {
    const stats = await api.fetchStats();
    el.stats.textContent = `pending ${stats.pending} | approved ${stats.counts.human_approved ?? 0} | edited ${stats.counts.human_edited ?? 0} | rejected ${stats.counts.human_rejected ?? 0}`;
  } catch {
    el.stats.textContent = "";
  }
}

function render() {
  const item = session.current();
  el.viewer.hidden = item === null;
  el.empty.hidden = item !== null;
  if (item === null) return;
  el.itemId.textContent = item.id;
  el.task.textContent = item.task;
  el.label.textContent = item.label ?? "(no label)";
  el.description.value = item.description;
  el.photo.onload = () => applyOverlay(el.highlight, el.photo, item.region);
  el.photo.src = item.image_url;
  if (el.photo.complete && el.photo.naturalWidth > 0) {
    applyOverlay(el.highlight, el.photo, item.region);
  }
}

async function act(action: "approve" | "edit" | "reject") {
  const item = session.current();
  if (item === null) return;
  const edited = el.description.value;
  const effective = action === "approve" && edited !== item.description ? "edit" : action;
  const outcome = await session.decide(effective, effective === "edit" ? edited : undefined);
  switch (outcome.kind) {
    case "ok":
      banner(null);
      break;
    case "conflict":
      banner("This item was decided elsewhere; the queue was reloaded - please re-check.");
      break;
    case "network_error":
      banner(`Could not reach the server (${outcome.detail}); the item stays queued.`);
      break;
    case "busy":
      return;
  }
  render();
  void refreshStats();
}

document.addEventListener("keydown", (ev) => {
  if (ev.target === el.description && ev.key !== "Escape") return;
  switch (ev.key) {
    case "a":
    case "A":
      void act("approve");
      break;
    case "e":
    case "E":
      void act("edit");
      break;
    case "r":
    case "R":
      void act("reject");
      break;
    case "ArrowRight":
      session.next();
      render();
      break;
    case "ArrowLeft":
      session.prev();
      render();
      break;
    case "Escape":
      el.description.blur();
      break;
  }
});

document.getElementById("approve")!.addEventListener("click", () => void act("approve"));
document.getElementById("edit")!.addEventListener("click", () => void act("edit"));
document.getElementById("reject")!.addEventListener("click", () => void act("reject"));
document.getElementById("next")!.addEventListener("click", () => {
  session.next();
  render();
});
document.getElementById("prev")!.addEventListener("click", () => {
  session.prev();
  render();
});
window.addEventListener("resize", () => {
  const item = session.current();
  if (item) applyOverlay(el.highlight, el.photo, item.region);
});

session
  .load()
  .then(() => {
    render();
    void refreshStats();
  })
  .catch((err) => banner(`Cannot load the review queue: ${err}`));
