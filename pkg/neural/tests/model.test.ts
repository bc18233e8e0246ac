import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'

import * as tf from '@tensorflow/tfjs'
import { describe, expect, it } from 'vitest'

import { ensureBackend } from '../src/backend.js'
import { FEATURE_DIM, makeRng } from '../src/data.js'
import { eigSym3 } from '../src/geometry.js'
import { DEFAULT_NET, SegNet } from '../src/model.js'

await ensureBackend()

function randomFeatures(n: number, seed: number): Float32Array {
  const rng = makeRng(seed)
  const f = new Float32Array(n * FEATURE_DIM)
  for (let i = 0; i < f.length; i++) f[i] = rng() * 2 - 1
  return f
}

describe('SegNet', () => {
  it('emits one label per point, in input order', () => {
    const net = SegNet.create()
    const feats = randomFeatures(57, 1)
    const labels = net.predict(feats, 57)
    expect(labels).toHaveLength(57)
    for (const v of labels) expect(v).toBeGreaterThanOrEqual(0)
  })

  it('is exactly permutation-equivariant', () => {
    const net = SegNet.create({ ...DEFAULT_NET, seed: 9 })
    const n = 64
    const feats = randomFeatures(n, 2)
    const rng = makeRng(3)
    const perm = Array.from({ length: n }, (_, i) => i)
    for (let i = n - 1; i > 0; i--) {
      const j = Math.floor(rng() * (i + 1))
      ;[perm[i], perm[j]] = [perm[j], perm[i]]
    }
    const permuted = new Float32Array(n * FEATURE_DIM)
    for (let i = 0; i < n; i++) {
      permuted.set(
        feats.subarray(perm[i] * FEATURE_DIM, (perm[i] + 1) * FEATURE_DIM),
        i * FEATURE_DIM,
      )
    }
    const logitsA = tf.tidy(() =>
      Float32Array.from(
        net.logits(tf.tensor3d(feats, [1, n, FEATURE_DIM])).dataSync(),
      ),
    )
    const logitsB = tf.tidy(() =>
      Float32Array.from(
        net.logits(tf.tensor3d(permuted, [1, n, FEATURE_DIM])).dataSync(),
      ),
    )
    for (let i = 0; i < n; i++) {
      for (let c = 0; c < 4; c++) {
        expect(logitsB[i * 4 + c]).toBe(logitsA[perm[i] * 4 + c])
      }
    }
  })

  it('handles variable point counts with one set of weights', () => {
    const net = SegNet.create()
    expect(net.predict(randomFeatures(10, 4), 10)).toHaveLength(10)
    expect(net.predict(randomFeatures(500, 5), 500)).toHaveLength(500)
  })

  it('save/load reproduces predictions exactly', async () => {
    const net = SegNet.create({ ...DEFAULT_NET, seed: 4 })
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'nn-ckpt-'))
    const ckpt = path.join(dir, 'net.json')
    await net.save(ckpt)
    const loaded = await SegNet.load(ckpt)
    const feats = randomFeatures(33, 6)
    expect([...loaded.predict(feats, 33)]).toEqual([...net.predict(feats, 33)])
  })

  it('rejects checkpoints with the wrong class count', async () => {
    const net = SegNet.create()
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'nn-ckpt-'))
    const ckpt = path.join(dir, 'net.json')
    await net.save(ckpt)
    const payload = JSON.parse(fs.readFileSync(ckpt, 'utf8'))
    payload.config.classes = 7
    fs.writeFileSync(ckpt, JSON.stringify(payload))
    await expect(SegNet.load(ckpt)).rejects.toThrow(/classes/)
  })
})

describe('eigSym3', () => {
  it('matches hand-computed eigenpairs on a diagonal-ish matrix', () => {
    // eigenvalues 1, 2, 5 with known axes
    const { values, vectors } = eigSym3([
      [2, 0, 0],
      [0, 5, 0],
      [0, 0, 1],
    ])
    expect(values[0]).toBeCloseTo(1, 12)
    expect(values[1]).toBeCloseTo(2, 12)
    expect(values[2]).toBeCloseTo(5, 12)
    expect(Math.abs(vectors[0][2])).toBeCloseTo(1, 12)
  })

  it('reconstructs random symmetric matrices', () => {
    const rng = makeRng(8)
    for (let trial = 0; trial < 20; trial++) {
      const q = Array.from({ length: 3 }, () =>
        Array.from({ length: 3 }, () => rng() * 2 - 1),
      )
      const m = [
        [0, 0, 0],
        [0, 0, 0],
        [0, 0, 0],
      ]
      for (let i = 0; i < 3; i++) {
        for (let j = 0; j < 3; j++) {
          for (let k = 0; k < 3; k++) m[i][j] += q[k][i] * q[k][j]
        }
      }
      const { values, vectors } = eigSym3(m)
      for (let e = 0; e < 3; e++) {
        const v = vectors[e]
        // m v = lambda v
        for (let i = 0; i < 3; i++) {
          const mv = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2]
          expect(mv).toBeCloseTo(values[e] * v[i], 8)
        }
      }
    }
  })
})
