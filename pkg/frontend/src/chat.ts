// Chat panel: learner turns go out over POST, mentor and agent turns
// arrive over long-polling. Messages render strictly in sequence order
// with sender labels; a failed send never loses the typed text.

import type { ApiClient } from "./api.js";
import type { ChatMessage, SessionInfo } from "./types.js";

export class ChatPanel {
  readonly element: HTMLElement;
  private messages = new Map<number, ChatMessage>();
  private list: HTMLElement;
  private input: HTMLInputElement;
  private sendButton: HTMLButtonElement;
  private errorNotice: HTMLElement;
  private session: SessionInfo | null = null;
  private polling = false;
  private stopped = false;

  constructor(
    private api: Pick<ApiClient, "createSession" | "postMessage" | "pollMessages">,
    private recommendationId: string,
    private pollDelayMs = 250,
  ) {
    this.element = document.createElement("section");
    this.element.className = "panel chat";
    this.element.dataset.kind = "chatbot";
    const heading = document.createElement("h2");
    heading.textContent = "Ask about this recommendation";
    this.element.appendChild(heading);

    this.list = document.createElement("ol");
    this.list.className = "chat-messages";
    this.element.appendChild(this.list);

    this.errorNotice = document.createElement("div");
    this.errorNotice.className = "chat-error";
    this.errorNotice.hidden = true;
    this.element.appendChild(this.errorNotice);

    const form = document.createElement("form");
    this.input = document.createElement("input");
    this.input.type = "text";
    this.input.placeholder = "Ask a question...";
    this.sendButton = document.createElement("button");
    this.sendButton.type = "submit";
    this.sendButton.textContent = "Send";
    form.appendChild(this.input);
    form.appendChild(this.sendButton);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.send();
    });
    this.element.appendChild(form);
  }

  lastSeq(): number {
    let max = 0;
    for (const seq of this.messages.keys()) {
      if (seq > max) max = seq;
    }
    return max;
  }

  async start(): Promise<void> {
    this.session = await this.api.createSession(this.recommendationId);
    void this.pollLoop();
  }

  stop(): void {
    this.stopped = true;
  }

  private agentRecipients(): string[] {
    if (!this.session) return [];
    const agents = this.session.participants
      .filter((p) => p.kind !== "learner")
      .map((p) => p.participant_id);
    return agents.length ? agents : ["assistant"];
  }

  async send(): Promise<void> {
    if (!this.session) return;
    const content = this.input.value.trim();
    if (!content) return;
    this.sendButton.disabled = true;
    try {
      const result = await this.api.postMessage(
        this.session.session_id,
        this.agentRecipients(),
        content,
      );
      this.accept(result.messages);
      this.input.value = "";
      this.errorNotice.hidden = true;
    } catch {
      // resilience: the typed text stays in the input and a retry is offered
      this.errorNotice.hidden = false;
      this.errorNotice.replaceChildren();
      this.errorNotice.append("Could not send. ");
      const retry = document.createElement("button");
      retry.type = "button";
      retry.className = "retry";
      retry.textContent = "Retry";
      retry.addEventListener("click", () => void this.send());
      this.errorNotice.appendChild(retry);
    } finally {
      this.sendButton.disabled = false;
    }
  }

  private async pollLoop(): Promise<void> {
    if (this.polling || !this.session) return;
    this.polling = true;
    while (!this.stopped) {
      try {
        const result = await this.api.pollMessages(this.session.session_id, this.lastSeq());
        if (result.messages.length) {
          this.accept(result.messages);
        }
      } catch {
        // transient poll errors: back off one delay and try again
      }
      await new Promise((resolve) => setTimeout(resolve, this.pollDelayMs));
    }
    this.polling = false;
  }

  accept(incoming: ChatMessage[]): void {
    for (const message of incoming) {
      this.messages.set(message.seq, message);
    }
    this.renderMessages();
  }

  private renderMessages(): void {
    const ordered = [...this.messages.values()].sort((a, b) => a.seq - b.seq);
    this.list.replaceChildren(
      ...ordered.map((message) => {
        const item = document.createElement("li");
        item.dataset.seq = String(message.seq);
        const sender = document.createElement("span");
        sender.className = "sender";
        sender.textContent = message.sender;
        const body = document.createElement("span");
        body.className = "content";
        body.textContent = message.content;
        item.append(sender, ": ", body);
        return item;
      }),
    );
  }
}
