/**
 * File exchange with the reconstruction pipeline: point-cloud files,
 * label files, and training manifests, plus featurization for the network.
 *
 * Cloud format: header `rooffit v1 n=<count> cols=<col-list>`, then one
 * whitespace-separated row per point (required cols x y z r g b, optional
 * nx ny nz label).  Label format: header `rooffit-labels v1 n=<count>`,
 * one integer per line in cloud point order.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { GEO_DIM, localGeometryFeatures } from './geometry.js'

export const NUM_CLASSES = 4
// 6 raw channels (centered xyz + rgb) + 6 local-geometry channels
export const FEATURE_DIM = 12

export interface Cloud {
  n: number
  xyz: Float64Array // packed x0 y0 z0 x1 ...
  rgb: Float64Array
  labels: Int32Array | null
}

export function parseCloud(text: string, source = '<memory>'): Cloud {
  const lines = text.split('\n')
  const header = lines[0] ?? ''
  const m = /^rooffit v1 n=(\d+) cols=(.+)$/.exec(header)
  if (!m) throw new Error(`${source}: line 1: bad header ${JSON.stringify(header)}`)
  const n = parseInt(m[1], 10)
  const cols = m[2].trim().split(/[,\s]+/)
  const need = ['x', 'y', 'z', 'r', 'g', 'b']
  for (const c of need) {
    if (!cols.includes(c)) throw new Error(`${source}: line 1: missing column ${c}`)
  }
  const at = new Map(cols.map((c, i) => [c, i]))
  const xyz = new Float64Array(n * 3)
  const rgb = new Float64Array(n * 3)
  const hasLabel = cols.includes('label')
  const labels = hasLabel ? new Int32Array(n) : null
  for (let i = 0; i < n; i++) {
    const line = lines[i + 1]
    if (line === undefined) {
      throw new Error(`${source}: line ${i + 2}: expected ${n} rows, file ended`)
    }
    const parts = line.split(/\s+/).filter((t) => t.length)
    if (parts.length !== cols.length) {
      throw new Error(
        `${source}: line ${i + 2}: expected ${cols.length} columns, got ${parts.length}`,
      )
    }
    const row = parts.map(Number)
    if (row.some((v) => Number.isNaN(v) && !hasLabel)) {
      throw new Error(`${source}: line ${i + 2}: non-numeric value`)
    }
    xyz[i * 3] = row[at.get('x')!]
    xyz[i * 3 + 1] = row[at.get('y')!]
    xyz[i * 3 + 2] = row[at.get('z')!]
    rgb[i * 3] = row[at.get('r')!]
    rgb[i * 3 + 1] = row[at.get('g')!]
    rgb[i * 3 + 2] = row[at.get('b')!]
    if (labels) {
      const v = row[at.get('label')!]
      if (!Number.isInteger(v) || v < 0 || v >= NUM_CLASSES) {
        throw new Error(`${source}: line ${i + 2}: bad label ${v}`)
      }
      labels[i] = v
    }
  }
  if (n === 0) throw new Error(`${source}: empty cloud`)
  return { n, xyz, rgb, labels }
}

export function readCloud(file: string): Cloud {
  return parseCloud(fs.readFileSync(file, 'utf8'), file)
}

export function writeLabels(labels: ArrayLike<number>, file: string): void {
  const out = [`rooffit-labels v1 n=${labels.length}`]
  for (let i = 0; i < labels.length; i++) out.push(String(labels[i]))
  fs.writeFileSync(file, out.join('\n') + '\n')
}

export function readLabels(file: string): Int32Array {
  const lines = fs.readFileSync(file, 'utf8').split('\n')
  const m = /^rooffit-labels v1 n=(\d+)$/.exec(lines[0] ?? '')
  if (!m) throw new Error(`${file}: bad label header`)
  const n = parseInt(m[1], 10)
  const values = lines
    .slice(1)
    .filter((l) => l.trim().length)
    .map((l) => parseInt(l, 10))
  if (values.length !== n) {
    throw new Error(`${file}: header says n=${n}, file has ${values.length}`)
  }
  return Int32Array.from(values)
}

export interface ManifestEntry {
  file: string
  counts: Record<string, number>
}

export function readManifest(file: string): ManifestEntry[] {
  const dir = path.dirname(file)
  const entries: ManifestEntry[] = []
  for (const line of fs.readFileSync(file, 'utf8').split('\n')) {
    if (!line.trim()) continue
    const [name, ...kv] = line.trim().split(/\s+/)
    const counts: Record<string, number> = {}
    for (const item of kv) {
      const [k, v] = item.split('=')
      counts[k] = parseInt(v, 10)
    }
    entries.push({ file: path.join(dir, name), counts })
  }
  if (!entries.length) throw new Error(`${file}: empty manifest`)
  return entries
}

/** Deterministic PRNG (mulberry32); all sampling flows through this. */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/**
 * Per-point features: xyz centered on the cloud centroid and scaled by the
 * cloud's largest centered radius (so coordinates land in [-1, 1]), rgb
 * scaled to [-0.5, 0.5], then the local-geometry channels (normal tilt,
 * surface variation, normal-fan ratios).  Order follows the input cloud.
 */
export function featurize(cloud: Cloud): Float32Array {
  const f = new Float32Array(cloud.n * FEATURE_DIM)
  const geo = localGeometryFeatures(cloud)
  let cx = 0
  let cy = 0
  let cz = 0
  for (let i = 0; i < cloud.n; i++) {
    cx += cloud.xyz[i * 3]
    cy += cloud.xyz[i * 3 + 1]
    cz += cloud.xyz[i * 3 + 2]
  }
  cx /= cloud.n
  cy /= cloud.n
  cz /= cloud.n
  let r2max = 0
  for (let i = 0; i < cloud.n; i++) {
    const dx = cloud.xyz[i * 3] - cx
    const dy = cloud.xyz[i * 3 + 1] - cy
    const dz = cloud.xyz[i * 3 + 2] - cz
    const r2 = dx * dx + dy * dy + dz * dz
    if (r2 > r2max) r2max = r2
  }
  const scale = r2max > 0 ? 1 / Math.sqrt(r2max) : 1
  for (let i = 0; i < cloud.n; i++) {
    const o = i * FEATURE_DIM
    f[o] = (cloud.xyz[i * 3] - cx) * scale
    f[o + 1] = (cloud.xyz[i * 3 + 1] - cy) * scale
    f[o + 2] = (cloud.xyz[i * 3 + 2] - cz) * scale
    f[o + 3] = cloud.rgb[i * 3] / 255 - 0.5
    f[o + 4] = cloud.rgb[i * 3 + 1] / 255 - 0.5
    f[o + 5] = cloud.rgb[i * 3 + 2] / 255 - 0.5
    for (let g = 0; g < GEO_DIM; g++) f[o + 6 + g] = geo[i * GEO_DIM + g]
  }
  return f
}

export interface AugmentOptions {
  rotation: boolean
  scaling: boolean
  translation: boolean
}

/**
 * Fixed-size training sample: `points` indices drawn from the cloud
 * (without replacement when it is large enough), features augmented by a
 * z-rotation, a uniform scale, and a small offset.
 */
export function sampleForTraining(
  cloud: Cloud,
  points: number,
  rng: () => number,
  augment: AugmentOptions,
  precomputed?: Float32Array,
): { features: Float32Array; labels: Int32Array } {
  if (!cloud.labels) throw new Error('training cloud has no labels')
  const base = precomputed ?? featurize(cloud)
  const idx = new Int32Array(points)
  if (cloud.n >= points) {
    // partial Fisher-Yates over an index pool
    const pool = Int32Array.from({ length: cloud.n }, (_, i) => i)
    for (let i = 0; i < points; i++) {
      const j = i + Math.floor(rng() * (cloud.n - i))
      const t = pool[i]
      pool[i] = pool[j]
      pool[j] = t
      idx[i] = pool[i]
    }
  } else {
    for (let i = 0; i < points; i++) idx[i] = Math.floor(rng() * cloud.n)
  }
  const ang = augment.rotation ? rng() * 2 * Math.PI : 0
  const cos = Math.cos(ang)
  const sin = Math.sin(ang)
  const scale = augment.scaling ? 0.8 + 0.4 * rng() : 1
  // coordinates are unit-normalized here, so jitter stays small
  const ox = augment.translation ? (rng() - 0.5) * 0.2 : 0
  const oy = augment.translation ? (rng() - 0.5) * 0.2 : 0
  const features = new Float32Array(points * FEATURE_DIM)
  const labels = new Int32Array(points)
  for (let i = 0; i < points; i++) {
    const s = idx[i] * FEATURE_DIM
    const o = i * FEATURE_DIM
    const x = base[s]
    const y = base[s + 1]
    features[o] = scale * (cos * x - sin * y) + ox
    features[o + 1] = scale * (sin * x + cos * y) + oy
    features[o + 2] = scale * base[s + 2]
    // color and the rotation-invariant geometry channels pass through
    for (let g = 3; g < FEATURE_DIM; g++) features[o + g] = base[s + g]
    labels[i] = cloud.labels[idx[i]]
  }
  return { features, labels }
}
