// Thin client for the backend HTTP API. The stream uses fetch + a reader so
// the same code runs in the browser and under node-based tests.
import { SseParser } from "./sse.js";
import { CommandInfo, IngestRecord, Prediction } from "./types.js";

export interface RecordsPage {
  records: IngestRecord[];
  next_since: number;
}

export type CommandResult =
  | { ok: true; command: CommandInfo }
  | { ok: false; error: string; detail?: string };

export class BackendClient {
  constructor(readonly base: string) {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  async health(): Promise<{ status: string; records: number; phase: string }> {
    const resp = await fetch(this.url("/health"));
    return resp.json();
  }

  async records(since: number, limit = 500): Promise<RecordsPage> {
    const resp = await fetch(this.url(`/records?since=${since}&limit=${limit}`));
    return resp.json();
  }

  /** Replay the whole store (page by page) from a sequence number. */
  async allRecords(since = 0): Promise<IngestRecord[]> {
    const out: IngestRecord[] = [];
    let cursor = since;
    for (;;) {
      const page = await this.records(cursor);
      out.push(...page.records);
      if (page.records.length === 0) return out;
      cursor = page.next_since;
    }
  }

  async prediction(seed: number): Promise<Prediction | null> {
    const resp = await fetch(this.url(`/prediction/${seed}`));
    if (resp.status === 404) return null;
    return resp.json();
  }

  async sendCommand(command: string, target: string,
                    issuedBy = "ui-operator"): Promise<CommandResult> {
    const resp = await fetch(this.url("/command"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ command, target, issued_by: issuedBy }),
    });
    const body = await resp.json();
    if (resp.status === 201) return { ok: true, command: body as CommandInfo };
    return { ok: false, error: body.error ?? `HTTP ${resp.status}`, detail: body.detail };
  }

  async commandStatus(id: number): Promise<CommandInfo | null> {
    const resp = await fetch(this.url(`/command/${id}`));
    return resp.status === 200 ? resp.json() : null;
  }

  async commands(): Promise<CommandInfo[]> {
    const resp = await fetch(this.url("/commands"));
    const body = await resp.json();
    return body.commands ?? [];
  }

  /**
   * Consume /stream until the connection drops or `signal` aborts.
   * Resolves when the stream ends; the caller owns reconnection policy.
   */
  async stream(onRecord: (record: IngestRecord) => void,
               signal?: AbortSignal): Promise<void> {
    const resp = await fetch(this.url("/stream"), { signal });
    if (!resp.ok || !resp.body) throw new Error(`stream failed: ${resp.status}`);
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      for (const payload of parser.push(decoder.decode(value, { stream: true }))) {
        onRecord(JSON.parse(payload) as IngestRecord);
      }
    }
  }
}
