/** Page bootstrap: claim the next task and mount the annotator. */

import { ServiceClient } from "./api.js";
import { appFromTask } from "./dom.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("service") ?? "";
  const worker = params.get("worker") ?? `anon-${Math.random().toString(36).slice(2, 10)}`;
  const container = document.getElementById("annotator");
  if (!container) throw new Error("missing #annotator container");

  const client = new ServiceClient(base);
  const payload = await client.nextTask(worker);
  if (payload === null) {
    container.textContent = "No tasks available right now. Please check back later.";
    return;
  }
  const app = appFromTask(container, payload, worker, client);
  app.onSubmitted = () => {
    container.textContent = "Submission received. Thank you!";
  };

  let last = performance.now();
  const loop = (now: number) => {
    app.tick((now - last) / 1000);
    last = now;
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

boot().catch((err) => {
  document.body.textContent = `Failed to start annotator: ${err}`;
});
