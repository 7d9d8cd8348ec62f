// Wiring: replay /records, then follow /stream; poll predictions while a
// seed descends; drive the command form. All state lives in the reducer.
import { BackendClient } from "./api.js";
import { render } from "./dashboard.js";
import {
  applyRecord, applyRecords, initialState, setCommands, trackCommand,
} from "./state.js";

const BACKEND = (window as { SEEDSIM_BACKEND?: string }).SEEDSIM_BACKEND
  ?? window.location.origin;

const client = new BackendClient(BACKEND);
const state = initialState();

function repaint(): void {
  render(state);
}

async function followStream(): Promise<void> {
  for (;;) {
    try {
      state.connection = "live";
      repaint();
      await client.stream((record) => {
        applyRecord(state, record);
        repaint();
      });
    } catch {
      // fall through to reconnect
    }
    state.connection = "lost";
    repaint();
    await new Promise((resolve) => setTimeout(resolve, 2000));
    // resynchronize anything missed while disconnected
    try {
      const missed = await client.allRecords(state.lastSequence + 1);
      applyRecords(state, missed);
    } catch {
      // backend still down; the loop keeps trying
    }
  }
}

async function pollPredictions(): Promise<void> {
  for (;;) {
    for (const seed of state.seeds.values()) {
      if (seed.phase === 4) { // Descent
        try {
          const pred = await client.prediction(seed.seedId);
          if (pred) state.predictions.set(seed.seedId, pred);
        } catch {
          // transient; next cycle retries
        }
      }
    }
    repaint();
    await new Promise((resolve) => setTimeout(resolve, 2000));
  }
}

async function pollCommandStates(): Promise<void> {
  for (;;) {
    try {
      const commands = await client.commands();
      if (commands.length) setCommands(state, commands);
      repaint();
    } catch {
      // transient
    }
    await new Promise((resolve) => setTimeout(resolve, 2000));
  }
}

function wireCommandForm(): void {
  const form = document.getElementById("command-form") as HTMLFormElement;
  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    const command = (document.getElementById("command-select") as HTMLSelectElement).value;
    const target = (document.getElementById("target-select") as HTMLSelectElement).value;
    const result = await client.sendCommand(command, target);
    if (result.ok) {
      trackCommand(state, result.command);
    } else {
      state.commandError = result.detail
        ? `${result.error}: ${result.detail}` : result.error;
    }
    repaint();
  });
}

async function boot(): Promise<void> {
  wireCommandForm();
  try {
    const replay = await client.allRecords(0);
    applyRecords(state, replay);
    setCommands(state, await client.commands());
  } catch {
    state.connection = "lost";
  }
  repaint();
  void followStream();
  void pollPredictions();
  void pollCommandStates();
}

void boot();
