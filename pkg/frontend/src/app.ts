// Bootstrap: fetch the learner's condition-filtered bundle, mount the
// panels it contains, attach the chat panel when the condition shows it,
// and start the telemetry flush loop.

import { ApiClient } from "./api.js";
import { ChatPanel } from "./chat.js";
import { renderBundle } from "./panels.js";
import { TelemetryQueue } from "./telemetry.js";

export interface AppOptions {
  baseUrl: string;
  token: string;
  recommendationId: string;
}

export async function startApp(root: HTMLElement, options: AppOptions): Promise<void> {
  const api = new ApiClient(options.baseUrl, options.token);
  const telemetry = new TelemetryQueue(api);

  const bundle = await api.getBundle(options.recommendationId);
  const panels = document.createElement("main");
  panels.className = "panels";
  root.replaceChildren(panels);
  renderBundle(panels, bundle, telemetry);

  if (bundle.chatbot_visible) {
    const chat = new ChatPanel(api, options.recommendationId);
    panels.appendChild(chat.element);
    await chat.start();
  }

  telemetry.start();
}

declare global {
  interface Window {
    explainlab?: AppOptions;
  }
}

// When loaded as a page script, configuration comes from window.explainlab.
if (typeof document !== "undefined" && document.getElementById("explainlab-root")) {
  const root = document.getElementById("explainlab-root")!;
  const options = window.explainlab;
  if (options) {
    void startApp(root, options);
  } else {
    root.textContent = "Missing window.explainlab configuration.";
  }
}
