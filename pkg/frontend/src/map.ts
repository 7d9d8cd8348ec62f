// Local-tangent seed map: project fixes and landing predictions into SVG
// coordinates. Pure view-model math here; DOM work stays in dashboard.ts.
import { DashboardState } from "./state.js";

const M_PER_DEG_LAT = 111320.0;

export interface MapMarker {
  seedId: number;
  x: number;
  y: number;
  label: string;
}

export interface MapCircle {
  seedId: number;
  x: number;
  y: number;
  r: number;
}

export interface MapView {
  markers: MapMarker[];
  circles: MapCircle[];
  metersPerPixel: number;
  originLat: number;
  originLon: number;
}

export function buildMapView(state: DashboardState, width: number,
                             height: number): MapView {
  interface Point { seedId: number; east: number; north: number; radius: number;
                    kind: "seed" | "prediction"; label: string }
  const fixes = [...state.seeds.values()].filter(
    (s) => s.lat !== undefined && s.lon !== undefined);
  if (fixes.length === 0) {
    return { markers: [], circles: [], metersPerPixel: 1,
             originLat: 0, originLon: 0 };
  }
  // anchor at the centroid so every marker moves when its fix does
  const lat0 = fixes.reduce((acc, s) => acc + s.lat!, 0) / fixes.length;
  const lon0 = fixes.reduce((acc, s) => acc + s.lon!, 0) / fixes.length;
  const mPerDegLon = M_PER_DEG_LAT * Math.cos((lat0 * Math.PI) / 180);
  const points: Point[] = [];
  for (const seed of fixes) {
    points.push({
      seedId: seed.seedId,
      east: (seed.lon! - lon0) * mPerDegLon,
      north: (seed.lat! - lat0) * M_PER_DEG_LAT,
      radius: 0,
      kind: "seed",
      label: `S${seed.seedId} ${seed.alt !== undefined ? Math.round(seed.alt) + " m" : ""}`,
    });
  }
  for (const [seedId, pred] of state.predictions) {
    points.push({
      seedId,
      east: (pred.predicted_lon - lon0) * mPerDegLon,
      north: (pred.predicted_lat - lat0) * M_PER_DEG_LAT,
      radius: pred.uncertainty_radius_m,
      kind: "prediction",
      label: "",
    });
  }
  let extent = 50; // meters half-width minimum
  for (const p of points) {
    extent = Math.max(extent, Math.abs(p.east) + p.radius, Math.abs(p.north) + p.radius);
  }
  const metersPerPixel = (2 * extent) / Math.min(width, height) * 1.1;
  const toX = (east: number) => width / 2 + east / metersPerPixel;
  const toY = (north: number) => height / 2 - north / metersPerPixel;

  const markers: MapMarker[] = [];
  const circles: MapCircle[] = [];
  for (const p of points) {
    if (p.kind === "seed") {
      markers.push({ seedId: p.seedId, x: toX(p.east), y: toY(p.north), label: p.label });
    } else {
      circles.push({ seedId: p.seedId, x: toX(p.east), y: toY(p.north),
                     r: p.radius / metersPerPixel });
    }
  }
  return { markers, circles, metersPerPixel, originLat: lat0, originLon: lon0 };
}
