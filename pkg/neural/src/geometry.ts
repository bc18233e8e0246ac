/**
 * Per-point local-geometry features.
 *
 * For each point: the PCA normal of its near neighborhood (tilt |nz| and
 * surface variation), and over a wider neighborhood the singular-value
 * structure of the stacked normals (fan ratios s2/s1, s3/s1 and the
 * horizontality of the fan axis).  These channels separate flat / sloped /
 * cylindrical / spherical surfaces locally, which a single-scale
 * aggregation network cannot recover from raw coordinates.
 */

import type { Cloud } from './data.js'

export const GEO_DIM = 6

/** Jacobi eigendecomposition of a symmetric 3x3 matrix.
 * Returns eigenvalues ascending and matching unit eigenvectors (rows). */
export function eigSym3(
  m: number[][],
): { values: [number, number, number]; vectors: number[][] } {
  const a = m.map((row) => row.slice())
  let v = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
  ]
  for (let sweep = 0; sweep < 32; sweep++) {
    let off = 0
    for (let p = 0; p < 3; p++) {
      for (let q = p + 1; q < 3; q++) off += a[p][q] * a[p][q]
    }
    if (off < 1e-24) break
    for (let p = 0; p < 3; p++) {
      for (let q = p + 1; q < 3; q++) {
        if (Math.abs(a[p][q]) < 1e-18) continue
        const theta = (a[q][q] - a[p][p]) / (2 * a[p][q])
        const t = Math.sign(theta || 1) / (Math.abs(theta) + Math.sqrt(theta * theta + 1))
        const c = 1 / Math.sqrt(t * t + 1)
        const s = t * c
        for (let k = 0; k < 3; k++) {
          const akp = a[k][p]
          const akq = a[k][q]
          a[k][p] = c * akp - s * akq
          a[k][q] = s * akp + c * akq
        }
        for (let k = 0; k < 3; k++) {
          const apk = a[p][k]
          const aqk = a[q][k]
          a[p][k] = c * apk - s * aqk
          a[q][k] = s * apk + c * aqk
        }
        for (let k = 0; k < 3; k++) {
          const vkp = v[k][p]
          const vkq = v[k][q]
          v[k][p] = c * vkp - s * vkq
          v[k][q] = s * vkp + c * vkq
        }
      }
    }
  }
  const order = [0, 1, 2].sort((i, j) => a[i][i] - a[j][j])
  return {
    values: order.map((i) => a[i][i]) as [number, number, number],
    vectors: order.map((i) => [v[0][i], v[1][i], v[2][i]]),
  }
}

/** Grid-hash k-nearest-neighbor search over the cloud's xyz. */
class NeighborGrid {
  private cells = new Map<string, number[]>()

  constructor(
    private xyz: Float64Array,
    private n: number,
    private cell: number,
  ) {
    for (let i = 0; i < n; i++) {
      const key = this.key(xyz[i * 3], xyz[i * 3 + 1], xyz[i * 3 + 2])
      let bucket = this.cells.get(key)
      if (!bucket) this.cells.set(key, (bucket = []))
      bucket.push(i)
    }
  }

  private key(x: number, y: number, z: number): string {
    return `${Math.floor(x / this.cell)},${Math.floor(y / this.cell)},${Math.floor(z / this.cell)}`
  }

  /** Indices of the k nearest points to point i (including i). */
  knn(i: number, k: number): number[] {
    const x = this.xyz[i * 3]
    const y = this.xyz[i * 3 + 1]
    const z = this.xyz[i * 3 + 2]
    const cx = Math.floor(x / this.cell)
    const cy = Math.floor(y / this.cell)
    const cz = Math.floor(z / this.cell)
    for (let ring = 1; ring < 12; ring++) {
      const cand: number[] = []
      for (let dx = -ring; dx <= ring; dx++) {
        for (let dy = -ring; dy <= ring; dy++) {
          for (let dz = -ring; dz <= ring; dz++) {
            const bucket = this.cells.get(`${cx + dx},${cy + dy},${cz + dz}`)
            if (bucket) cand.push(...bucket)
          }
        }
      }
      // accept only when the k-th distance fits inside the searched ring
      if (cand.length >= k) {
        const withD = cand.map((j) => {
          const dx = this.xyz[j * 3] - x
          const dy = this.xyz[j * 3 + 1] - y
          const dz = this.xyz[j * 3 + 2] - z
          return [dx * dx + dy * dy + dz * dz, j] as [number, number]
        })
        withD.sort((a, b) => a[0] - b[0] || a[1] - b[1])
        const kth = Math.sqrt(withD[Math.min(k, withD.length) - 1][0])
        if (kth <= ring * this.cell || cand.length === this.n) {
          return withD.slice(0, k).map(([, j]) => j)
        }
      }
      if (cand.length === this.n) {
        const withD = cand.map((j) => {
          const dx = this.xyz[j * 3] - x
          const dy = this.xyz[j * 3 + 1] - y
          const dz = this.xyz[j * 3 + 2] - z
          return [dx * dx + dy * dy + dz * dz, j] as [number, number]
        })
        withD.sort((a, b) => a[0] - b[0] || a[1] - b[1])
        return withD.slice(0, k).map(([, j]) => j)
      }
    }
    return [i]
  }
}

function meanSpacing(cloud: Cloud): number {
  // lattice-equivalent spacing from the footprint area
  let minX = Infinity
  let maxX = -Infinity
  let minY = Infinity
  let maxY = -Infinity
  for (let i = 0; i < cloud.n; i++) {
    const x = cloud.xyz[i * 3]
    const y = cloud.xyz[i * 3 + 1]
    if (x < minX) minX = x
    if (x > maxX) maxX = x
    if (y < minY) minY = y
    if (y > maxY) maxY = y
  }
  const area = Math.max((maxX - minX) * (maxY - minY), 1e-9)
  return Math.sqrt(area / cloud.n)
}

/**
 * n x GEO_DIM features: [|nz|, surface variation, fan s2/s1, fan s3/s1,
 * |fan axis z|, edge-ness], all rotation- and translation-invariant.
 * Edge-ness is the offset of the neighborhood centroid from the point,
 * scaled by the neighborhood radius: ~0 deep inside a surface, ~0.5 on a
 * crop edge where the neighborhood is one-sided (geometry channels are
 * unreliable there, and the network can learn to discount them).
 */
export function localGeometryFeatures(
  cloud: Cloud,
  normalK = 16,
  fanK = 32,
): Float32Array {
  const n = cloud.n
  const out = new Float32Array(n * GEO_DIM)
  const spacing = meanSpacing(cloud)
  const grid = new NeighborGrid(cloud.xyz, n, Math.max(2 * spacing, 0.25))
  const normals = new Float64Array(n * 3)
  const kNear = Math.min(normalK, n)
  const kFan = Math.min(fanK, n)
  for (let i = 0; i < n; i++) {
    const nbr = grid.knn(i, kNear)
    let cx = 0
    let cy = 0
    let cz = 0
    for (const j of nbr) {
      cx += cloud.xyz[j * 3]
      cy += cloud.xyz[j * 3 + 1]
      cz += cloud.xyz[j * 3 + 2]
    }
    cx /= nbr.length
    cy /= nbr.length
    cz /= nbr.length
    const cov = [
      [0, 0, 0],
      [0, 0, 0],
      [0, 0, 0],
    ]
    for (const j of nbr) {
      const dx = cloud.xyz[j * 3] - cx
      const dy = cloud.xyz[j * 3 + 1] - cy
      const dz = cloud.xyz[j * 3 + 2] - cz
      cov[0][0] += dx * dx
      cov[0][1] += dx * dy
      cov[0][2] += dx * dz
      cov[1][1] += dy * dy
      cov[1][2] += dy * dz
      cov[2][2] += dz * dz
    }
    cov[1][0] = cov[0][1]
    cov[2][0] = cov[0][2]
    cov[2][1] = cov[1][2]
    const { values, vectors } = eigSym3(cov)
    let edge = 0
    {
      const dx = cx - cloud.xyz[i * 3]
      const dy = cy - cloud.xyz[i * 3 + 1]
      const dz = cz - cloud.xyz[i * 3 + 2]
      const far = nbr[nbr.length - 1]
      const rx = cloud.xyz[far * 3] - cloud.xyz[i * 3]
      const ry = cloud.xyz[far * 3 + 1] - cloud.xyz[i * 3 + 1]
      const rz = cloud.xyz[far * 3 + 2] - cloud.xyz[i * 3 + 2]
      const radius = Math.hypot(rx, ry, rz)
      edge = radius > 0 ? Math.hypot(dx, dy, dz) / radius : 0
    }
    let [nx, ny, nz] = vectors[0]
    if (nz < 0 || (nz === 0 && (nx < 0 || (nx === 0 && ny < 0)))) {
      nx = -nx
      ny = -ny
      nz = -nz
    }
    normals[i * 3] = nx
    normals[i * 3 + 1] = ny
    normals[i * 3 + 2] = nz
    const trace = values[0] + values[1] + values[2]
    out[i * GEO_DIM] = Math.abs(nz)
    out[i * GEO_DIM + 1] = trace > 0 ? values[0] / trace : 0
    out[i * GEO_DIM + 5] = edge
  }
  for (let i = 0; i < n; i++) {
    const nbr = grid.knn(i, kFan)
    const m = [
      [0, 0, 0],
      [0, 0, 0],
      [0, 0, 0],
    ]
    for (const j of nbr) {
      const nx = normals[j * 3]
      const ny = normals[j * 3 + 1]
      const nz = normals[j * 3 + 2]
      m[0][0] += nx * nx
      m[0][1] += nx * ny
      m[0][2] += nx * nz
      m[1][1] += ny * ny
      m[1][2] += ny * nz
      m[2][2] += nz * nz
    }
    m[1][0] = m[0][1]
    m[2][0] = m[0][2]
    m[2][1] = m[1][2]
    const { values, vectors } = eigSym3(m)
    const s1 = Math.sqrt(Math.max(values[2], 0))
    const s2 = Math.sqrt(Math.max(values[1], 0))
    const s3 = Math.sqrt(Math.max(values[0], 0))
    out[i * GEO_DIM + 2] = s1 > 0 ? s2 / s1 : 0
    out[i * GEO_DIM + 3] = s1 > 0 ? s3 / s1 : 0
    out[i * GEO_DIM + 4] = Math.abs(vectors[0][2])
  }
  return out
}
