/** Schematic top-down plot built from tapped topics. Pure geometry: the
 * DOM layer only has to draw the primitives this module returns. */

import type { TapFeed } from "./tap.js";

export interface VehicleMarker {
  id: string;
  x: number;
  y: number;
  theta: number;
}

export interface TipTrail {
  points: Array<[number, number]>; // x/y of the arm tip, oldest first
  grasped: boolean;
}

export interface JointStrip {
  names: string[];
  /** joint positions scaled into [-1, 1] by pi; schematic, not to scale */
  normalized: number[];
}

export interface PlotModel {
  vehicles: VehicleMarker[];
  trail: TipTrail | null;
  objects: Array<[number, number]>;
  joints: JointStrip | null;
}

const TRAIL_CAP = 200;

export function buildPlotModel(feeds: Iterable<TapFeed>): PlotModel {
  const model: PlotModel = { vehicles: [], trail: null, objects: [], joints: null };
  for (const feed of feeds) {
    const latest = feed.latest();
    if (!latest) continue;
    if (latest.type === "world/Fleet") {
      model.vehicles = (latest.payload.vehicles as Array<any>).map((v) => ({
        id: v.vehicle_id,
        x: v.pose.x,
        y: v.pose.y,
        theta: v.pose.theta,
      }));
    } else if (latest.type === "world/ArmStatus") {
      const entries = feed.entries.slice(-TRAIL_CAP);
      model.trail = {
        points: entries.map((e) => [e.env.payload.tip_position.x, e.env.payload.tip_position.y]),
        grasped: Boolean(latest.payload.grasped),
      };
      const obj = latest.payload.object_position;
      if (obj) model.objects.push([obj.x, obj.y]);
    } else if (latest.type === "sensor/JointState") {
      model.joints = {
        names: latest.payload.name ?? [],
        normalized: (latest.payload.position as number[] ?? []).map(
          (p) => Math.max(-1, Math.min(1, p / Math.PI)),
        ),
      };
    }
  }
  return model;
}

export interface ViewBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

/** Bounds of everything drawable, padded; a fallback box when empty. */
export function fitViewBox(model: PlotModel, pad = 0.5): ViewBox {
  const xs: number[] = [];
  const ys: number[] = [];
  for (const v of model.vehicles) {
    xs.push(v.x);
    ys.push(v.y);
  }
  for (const [x, y] of model.trail?.points ?? []) {
    xs.push(x);
    ys.push(y);
  }
  for (const [x, y] of model.objects) {
    xs.push(x);
    ys.push(y);
  }
  if (xs.length === 0) return { x: -2, y: -2, w: 4, h: 4 };
  const minX = Math.min(...xs) - pad;
  const maxX = Math.max(...xs) + pad;
  const minY = Math.min(...ys) - pad;
  const maxY = Math.max(...ys) + pad;
  return { x: minX, y: minY, w: maxX - minX, h: maxY - minY };
}

/** Triangle pointing along theta, for drawing a vehicle pose. */
export function vehicleTriangle(m: VehicleMarker, size = 0.18): Array<[number, number]> {
  const nose: [number, number] = [size, 0];
  const rear: Array<[number, number]> = [
    [-size * 0.6, size * 0.5],
    [-size * 0.6, -size * 0.5],
  ];
  const cos = Math.cos(m.theta);
  const sin = Math.sin(m.theta);
  return [nose, ...rear].map(([px, py]) => [
    m.x + px * cos - py * sin,
    m.y + px * sin + py * cos,
  ]);
}
