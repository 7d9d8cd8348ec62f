// DOM rendering: everything on screen is a projection of DashboardState.
import { buildMapView } from "./map.js";
import { DashboardState, latestPower } from "./state.js";
import { phaseName } from "./types.js";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function fmt(value: number | undefined, digits = 2, unit = ""): string {
  if (value === undefined) return "–";
  return value.toFixed(digits) + unit;
}

export function render(state: DashboardState): void {
  renderStatusBar(state);
  renderSeeds(state);
  renderPowerPanel(state);
  renderMap(state);
  renderCommands(state);
}

function renderStatusBar(state: DashboardState): void {
  const badge = el("connection-badge");
  badge.textContent = state.connection;
  badge.className = `badge ${state.connection}`;
  for (const channel of ["rxsm", "iridium"]) {
    const node = el(`channel-${channel}`);
    const status = state.channels.get(channel);
    node.textContent = status ? `${channel}: ${status.count}` : `${channel}: —`;
    node.className = "badge " + (status ? "live" : "idle");
  }
  el("record-count").textContent =
    `${state.recordCount} records (${state.quarantineCount} quarantined)`;
}

function renderSeeds(state: DashboardState): void {
  const body = el("seed-rows");
  body.innerHTML = "";
  for (const seed of [...state.seeds.values()].sort((a, b) => a.seedId - b.seedId)) {
    const row = document.createElement("tr");
    const pred = state.predictions.get(seed.seedId);
    row.innerHTML = `
      <td>Seed ${seed.seedId}</td>
      <td>${phaseName(seed.phase)}</td>
      <td>${seed.gpsValid ? fmt(seed.lat, 5) + ", " + fmt(seed.lon, 5) : "no fix"}</td>
      <td>${fmt(seed.alt, 0, " m")}</td>
      <td>${fmt(seed.vz, 1, " m/s")}</td>
      <td>${fmt(seed.vBat1, 2, " V")} / ${fmt(seed.vBat2, 2, " V")}</td>
      <td>${pred ? `${fmt(pred.time_to_land_s, 0, " s")} ±${Math.round(pred.uncertainty_radius_m)} m` : "–"}</td>`;
    body.appendChild(row);
  }
}

function renderPowerPanel(state: DashboardState): void {
  const body = el("power-rows");
  body.innerHTML = "";
  for (const seedId of [...state.power.keys()].sort()) {
    const latest = latestPower(state, seedId);
    if (!latest) continue;
    const row = document.createElement("tr");
    const latched = latest.latches
      ? `latched(${(latest.latches & 1) ? "1" : ""}${(latest.latches & 2) ? "2" : ""})`
      : "armed";
    row.innerHTML = `
      <td>Seed ${seedId}</td>
      <td>${latest.vBus.toFixed(2)} V</td>
      <td class="${latest.iBat1 === 0 ? "zero" : ""}">${latest.iBat1.toFixed(3)} A</td>
      <td class="${latest.iBat2 === 0 ? "zero" : ""}">${latest.iBat2.toFixed(3)} A</td>
      <td>${latest.iRxsm.toFixed(3)} A</td>
      <td>${latched}</td>`;
    body.appendChild(row);
    const history = state.power.get(seedId) ?? [];
    const spark = history.slice(-40).map((s) =>
      `<span class="bar" style="height:${Math.min(40, Math.round((s.iBat1 + s.iBat2) * 30))}px"
             title="ctr ${s.counter}: ${s.iBat1.toFixed(2)}+${s.iBat2.toFixed(2)} A"></span>`).join("");
    const sparkRow = document.createElement("tr");
    sparkRow.innerHTML = `<td colspan="6" class="spark">${spark}</td>`;
    body.appendChild(sparkRow);
  }
}

function renderMap(state: DashboardState): void {
  const svg = el("map") as unknown as SVGSVGElement;
  const width = svg.clientWidth || 420;
  const height = svg.clientHeight || 320;
  const view = buildMapView(state, width, height);
  const ns = "http://www.w3.org/2000/svg";
  svg.innerHTML = "";
  for (const circle of view.circles) {
    const node = document.createElementNS(ns, "circle");
    node.setAttribute("cx", circle.x.toFixed(1));
    node.setAttribute("cy", circle.y.toFixed(1));
    node.setAttribute("r", Math.max(circle.r, 3).toFixed(1));
    node.setAttribute("class", "prediction");
    svg.appendChild(node);
  }
  for (const marker of view.markers) {
    const dot = document.createElementNS(ns, "circle");
    dot.setAttribute("cx", marker.x.toFixed(1));
    dot.setAttribute("cy", marker.y.toFixed(1));
    dot.setAttribute("r", "5");
    dot.setAttribute("class", `seed seed-${marker.seedId}`);
    svg.appendChild(dot);
    const text = document.createElementNS(ns, "text");
    text.setAttribute("x", (marker.x + 8).toFixed(1));
    text.setAttribute("y", (marker.y - 8).toFixed(1));
    text.textContent = marker.label;
    svg.appendChild(text);
  }
  el("map-scale").textContent = view.markers.length
    ? `${view.metersPerPixel.toFixed(1)} m/px around ${view.originLat.toFixed(4)}, ${view.originLon.toFixed(4)}`
    : "no fixes yet";
}

function renderCommands(state: DashboardState): void {
  const banner = el("command-error");
  if (state.commandError) {
    banner.textContent = state.commandError;
    banner.style.display = "block";
  } else {
    banner.style.display = "none";
  }
  const list = el("command-history");
  list.innerHTML = "";
  for (const cmd of [...state.commands].reverse().slice(0, 12)) {
    const item = document.createElement("li");
    item.innerHTML = `#${cmd.command_id} ${cmd.command} → ${cmd.target} ` +
      `<span class="badge ${cmd.ack_state}">${cmd.ack_state}</span>`;
    list.appendChild(item);
  }
}
