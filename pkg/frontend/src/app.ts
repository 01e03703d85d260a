/**
 * Canvas wiring for the annotation tool.
 *
 * Layer stack (bottom to top): the image, the boundary overlay, the
 * default-rule pre-shading, then the segments with their foreground
 * preview bands. All state lives in one AnnotationSession; every
 * mutation redraws the top layer.
 *
 * Keys: U undo, F flip last, Delete remove selected.
 */

import { AnnotationSession } from "./session.js";
import { Segment } from "./segments.js";
import { shadingQuad, leftNormal } from "./leftrule.js";
import { defaultRuleCells, parseInstanceGrid, InstanceGrid } from "./preshade.js";

const SCALE = 4; // screen pixels per image pixel

interface Layers {
  base: CanvasRenderingContext2D;
  marks: CanvasRenderingContext2D;
}

let session = new AnnotationSession("untitled.png");
let image: HTMLImageElement | null = null;
let overlay: HTMLImageElement | null = null;
let grid: InstanceGrid | null = null;
let dragStart: { x: number; y: number } | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function canvasPoint(canvas: HTMLCanvasElement, ev: MouseEvent) {
  const rect = canvas.getBoundingClientRect();
  return {
    x: (ev.clientX - rect.left) / SCALE,
    y: (ev.clientY - rect.top) / SCALE,
  };
}

function drawBase(layers: Layers): void {
  const ctx = layers.base;
  ctx.save();
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.scale(SCALE, SCALE);
  ctx.imageSmoothingEnabled = false;
  if (image) ctx.drawImage(image, 0, 0);
  if (overlay) {
    ctx.globalAlpha = 0.5;
    ctx.drawImage(overlay, 0, 0);
    ctx.globalAlpha = 1;
  }
  if (grid) {
    ctx.fillStyle = "rgba(80, 170, 90, 0.35)";
    for (const cell of defaultRuleCells(grid)) {
      ctx.fillRect(cell.x - 0.5, cell.y - 0.5, 1, 1);
    }
  }
  ctx.restore();
}

function drawSegment(ctx: CanvasRenderingContext2D, s: Segment, selected: boolean): void {
  const quad = shadingQuad(s, 3);
  ctx.fillStyle = selected ? "rgba(250, 150, 40, 0.4)" : "rgba(60, 120, 230, 0.3)";
  ctx.beginPath();
  ctx.moveTo(quad[0].x, quad[0].y);
  for (const p of quad.slice(1)) ctx.lineTo(p.x, p.y);
  ctx.closePath();
  ctx.fill();

  ctx.strokeStyle = selected ? "#fa9628" : "#3c78e6";
  ctx.lineWidth = 2 / SCALE;
  ctx.beginPath();
  ctx.moveTo(s.x0, s.y0);
  ctx.lineTo(s.x1, s.y1);
  ctx.stroke();

  // arrowhead showing direction
  const n = leftNormal(s);
  const len = Math.hypot(s.x1 - s.x0, s.y1 - s.y0);
  const ux = (s.x1 - s.x0) / len;
  const uy = (s.y1 - s.y0) / len;
  ctx.beginPath();
  ctx.moveTo(s.x1, s.y1);
  ctx.lineTo(s.x1 - 1.5 * ux + 0.75 * n.x, s.y1 - 1.5 * uy + 0.75 * n.y);
  ctx.moveTo(s.x1, s.y1);
  ctx.lineTo(s.x1 - 1.5 * ux - 0.75 * n.x, s.y1 - 1.5 * uy - 0.75 * n.y);
  ctx.stroke();
}

function drawMarks(layers: Layers): void {
  const ctx = layers.marks;
  ctx.save();
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.scale(SCALE, SCALE);
  session.list().forEach((s, i) => drawSegment(ctx, s, i === session.selected));
  ctx.restore();
}

function refresh(layers: Layers): void {
  drawBase(layers);
  drawMarks(layers);
  el<HTMLSpanElement>("notice").textContent = session.notice;
  el<HTMLSpanElement>("count").textContent = String(session.list().length);
}

function resizeCanvases(w: number, h: number): void {
  for (const id of ["base", "marks"]) {
    const canvas = el<HTMLCanvasElement>(id);
    canvas.width = w * SCALE;
    canvas.height = h * SCALE;
  }
}

function loadImageFile(file: File): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`cannot load ${file.name}`));
    img.src = URL.createObjectURL(file);
  });
}

function saveExport(): void {
  const blob = new Blob([session.exportText()], { type: "application/json" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = session.image.replace(/\.[a-z]+$/i, "") + ".segments.json";
  link.click();
  URL.revokeObjectURL(link.href);
}

export function start(): void {
  const layers: Layers = {
    base: el<HTMLCanvasElement>("base").getContext("2d")!,
    marks: el<HTMLCanvasElement>("marks").getContext("2d")!,
  };
  resizeCanvases(64, 64);

  el<HTMLInputElement>("image-input").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    image = await loadImageFile(file);
    session = new AnnotationSession(file.name);
    resizeCanvases(image.naturalWidth, image.naturalHeight);
    refresh(layers);
  });
  el<HTMLInputElement>("overlay-input").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    overlay = await loadImageFile(file);
    refresh(layers);
  });
  el<HTMLInputElement>("instances-input").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    grid = parseInstanceGrid(await file.text());
    refresh(layers);
  });
  el<HTMLButtonElement>("export").addEventListener("click", saveExport);

  const marks = el<HTMLCanvasElement>("marks");
  marks.addEventListener("mousedown", (ev) => {
    dragStart = canvasPoint(marks, ev);
  });
  marks.addEventListener("mouseup", (ev) => {
    if (!dragStart) return;
    const end = canvasPoint(marks, ev);
    const moved = Math.hypot(end.x - dragStart.x, end.y - dragStart.y);
    if (moved < 0.5) {
      session.selectAt(end, 2);
    } else {
      session.add(dragStart.x, dragStart.y, end.x, end.y);
    }
    dragStart = null;
    refresh(layers);
  });

  document.addEventListener("keydown", (ev) => {
    if (ev.key === "u" || ev.key === "U") session.undo();
    else if (ev.key === "f" || ev.key === "F") session.flipLast();
    else if (ev.key === "Delete") session.removeSelected();
    else return;
    refresh(layers);
  });

  refresh(layers);
}

start();
