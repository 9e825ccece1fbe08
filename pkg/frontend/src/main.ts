/** Participant entry point.
 *
 * The session token arrives as a query parameter (no cookies):
 *   index.html?study=study0001&session=s0001
 * or with participant=NEW to enrol a fresh session in the study.
 */

import { ApiClient } from "./api.js";
import { DomView } from "./dom.js";
import { RealScheduler } from "./timing.js";
import { TrialRunner } from "./trialRunner.js";

async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("api") ?? "";
  const study = params.get("study");
  let session = params.get("session");

  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const api = new ApiClient(baseUrl);
  const view = new DomView(root, baseUrl);

  if (!session) {
    if (!study) {
      view.notify("missing ?study= or ?session= parameter");
      return;
    }
    const created = await api.createParticipant(study);
    session = created.session_id;
    view.notify(`enrolled as ${created.participant_id} (${created.trial_count} trials)`);
  }

  const runner = new TrialRunner(api, view, new RealScheduler());
  await runner.runSession(session);
}

start().catch((err) => {
  const root = document.getElementById("app");
  if (root) root.textContent = `error: ${err}`;
});
