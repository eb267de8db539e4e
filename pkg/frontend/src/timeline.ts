/**
 * Trace timeline layout.
 *
 * Turns the exported span tree into per-level lanes of drawable intervals.
 * The layout never invents or clips times: every rendered interval is the
 * span's own [begin_us, end_us], and construction fails loudly if a child
 * escapes its parent, because a timeline that redraws bad data as good is
 * worse than no timeline.
 */

import type { SpanNode, TraceLevelName, TraceView } from "./types.js";
import { TRACE_LEVELS, traceLevelRank } from "./types.js";

export interface TimelineSpan {
  id: string;
  name: string;
  level: TraceLevelName;
  beginUs: number;
  endUs: number;
  durationUs: number;
  parentId: string | null;
  depth: number;
}

export interface Lane {
  level: TraceLevelName;
  spans: TimelineSpan[];
}

export interface Timeline {
  traceId: string;
  beginUs: number;
  endUs: number;
  lanes: Lane[];
}

export class LayoutError extends Error {}

function walk(
  node: SpanNode,
  parent: TimelineSpan | null,
  depth: number,
  out: TimelineSpan[],
): void {
  if (parent !== null) {
    if (node.begin_us < parent.beginUs || node.end_us > parent.endUs) {
      throw new LayoutError(
        `span ${node.name} [${node.begin_us}, ${node.end_us}] escapes ` +
        `parent ${parent.name} [${parent.beginUs}, ${parent.endUs}]`);
    }
    if (traceLevelRank(node.level) < traceLevelRank(parent.level)) {
      throw new LayoutError(
        `span ${node.name} (${node.level}) is coarser than its parent ` +
        `${parent.name} (${parent.level})`);
    }
  }
  if (node.end_us < node.begin_us) {
    throw new LayoutError(`span ${node.name} ends before it begins`);
  }
  const drawn: TimelineSpan = {
    id: node.id,
    name: node.name,
    level: node.level,
    beginUs: node.begin_us,
    endUs: node.end_us,
    durationUs: node.duration_us,
    parentId: parent?.id ?? null,
    depth,
  };
  out.push(drawn);
  for (const child of node.children) {
    walk(child, drawn, depth + 1, out);
  }
}

/**
 * Lay a trace out into level lanes, coarsest first. `maxLevel` drops spans
 * finer than the chosen level together with their subtrees, the same
 * filtering the tracer itself applies at collection time.
 */
export function layoutTimeline(trace: TraceView, maxLevel?: TraceLevelName): Timeline {
  const flat: TimelineSpan[] = [];
  for (const root of trace.roots) {
    walk(root, null, 0, flat);
  }
  const cutoff = maxLevel === undefined
    ? TRACE_LEVELS.length
    : traceLevelRank(maxLevel);
  const kept = flat.filter((s) => traceLevelRank(s.level) <= cutoff);

  const lanes: Lane[] = [];
  for (const level of TRACE_LEVELS) {
    const spans = kept
      .filter((s) => s.level === level)
      .sort((x, y) => x.beginUs - y.beginUs || x.id.localeCompare(y.id));
    if (spans.length > 0) {
      lanes.push({ level, spans });
    }
  }
  const beginUs = kept.length ? Math.min(...kept.map((s) => s.beginUs)) : 0;
  const endUs = kept.length ? Math.max(...kept.map((s) => s.endUs)) : 0;
  return { traceId: trace.trace_id, beginUs, endUs, lanes };
}

export interface Viewport {
  /** Visible window in trace microseconds. */
  beginUs: number;
  endUs: number;
  /** Pixel width the window maps onto. */
  widthPx: number;
}

/** Zoom helper: where a span lands inside the current viewport. */
export function toPixels(
  span: { beginUs: number; endUs: number },
  view: Viewport,
): { leftPx: number; widthPx: number } {
  const usable = Math.max(view.endUs - view.beginUs, 1);
  const scale = view.widthPx / usable;
  return {
    leftPx: (span.beginUs - view.beginUs) * scale,
    widthPx: Math.max((span.endUs - span.beginUs) * scale, 1),
  };
}

/** All spans of a laid-out timeline, lane order preserved. */
export function allSpans(timeline: Timeline): TimelineSpan[] {
  return timeline.lanes.flatMap((lane) => lane.spans);
}
