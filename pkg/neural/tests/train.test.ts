import { execSync } from 'node:child_process'
import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'

import { describe, expect, it } from 'vitest'

import { ensureBackend } from '../src/backend.js'
import { makeRng, readCloud, readLabels } from '../src/data.js'
import { inferFile } from '../src/infer.js'
import { pointAccuracy, train } from '../src/train.js'

await ensureBackend()

/** Tiny labeled dataset written straight in the pipeline's cloud format. */
function makeToyDataset(perClass: number, seed: number, skipClass?: number): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'nn-toy-'))
  const rng = makeRng(seed)
  const lines: string[] = []
  const classNames = ['flat', 'sloped', 'cylindrical', 'spherical']
  let index = 0
  for (let cls = 0; cls < 4; cls++) {
    if (cls === skipClass) continue
    for (let s = 0; s < perClass; s++) {
      const n = 400
      const rows: string[] = [`rooffit v1 n=${n} cols=x,y,z,r,g,b,label`]
      for (let i = 0; i < n; i++) {
        const x = rng() * 16
        const y = rng() * 16
        let z: number
        if (cls === 0) z = 6
        else if (cls === 1) z = 4 + 0.5 * x
        else if (cls === 2) {
          const u = y - 8
          z = 4 + Math.sqrt(Math.max(100 - u * u, 0)) - 6
        } else {
          const dx = x - 8
          const dy = y - 8
          z = 4 + Math.sqrt(Math.max(120 - dx * dx - dy * dy, 0)) - 6
        }
        z += (rng() - 0.5) * 0.2
        const c = Math.round(100 + 60 * rng())
        rows.push(`${x} ${y} ${z} ${c} ${c} ${c} ${cls}`)
      }
      const name = `toy_${index.toString().padStart(3, '0')}.txt`
      fs.writeFileSync(path.join(dir, name), rows.join('\n') + '\n')
      const counts = classNames
        .map((k, i) => `${k}=${i === cls ? 400 : 0}`)
        .join(' ')
      lines.push(`${name} ${counts}`)
      index += 1
    }
  }
  const manifest = path.join(dir, 'manifest.txt')
  fs.writeFileSync(manifest, lines.join('\n') + '\n')
  return manifest
}

describe('training', () => {
  it('loss decreases over a short smoke run', async () => {
    const manifest = makeToyDataset(4, 1)
    const { log } = await train(manifest, {
      epochs: 5,
      batchSize: 8,
      pointsPerSample: 128,
      learningRate: 0.002,
      seed: 2,
    })
    expect(log).toHaveLength(5)
    expect(log[4].loss).toBeLessThan(log[0].loss)
  })

  it('is deterministic: identical first-epoch loss for the same seed', async () => {
    const manifest = makeToyDataset(3, 7)
    const run = () =>
      train(manifest, {
        epochs: 1,
        batchSize: 8,
        pointsPerSample: 96,
        seed: 11,
      })
    const a = await run()
    const b = await run()
    expect(Math.abs(a.log[0].loss - b.log[0].loss)).toBeLessThan(1e-5)
  })

  it('rejects training data missing a class', async () => {
    const manifest = makeToyDataset(2, 3, 2)
    await expect(train(manifest, { epochs: 1 })).rejects.toThrow(/cylindrical/)
  })
})

describe('inference', () => {
  it('labels a clean flat roof >= 95% flat after training', async () => {
    const manifest = makeToyDataset(5, 21)
    const { net } = await train(manifest, {
      epochs: 12,
      batchSize: 8,
      pointsPerSample: 128,
      learningRate: 0.002,
      seed: 3,
    })
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'nn-inf-'))
    const ckpt = path.join(dir, 'net.json')
    await net.save(ckpt)
    // a held-out clean flat roof
    const rng = makeRng(99)
    const n = 600
    const rows = [`rooffit v1 n=${n} cols=x,y,z,r,g,b`]
    for (let i = 0; i < n; i++) {
      rows.push(`${rng() * 14} ${rng() * 14} ${9 + (rng() - 0.5) * 0.1} 120 120 120`)
    }
    const cloudPath = path.join(dir, 'flat.txt')
    fs.writeFileSync(cloudPath, rows.join('\n') + '\n')
    const out = path.join(dir, 'flat.labels')
    const count = await inferFile(ckpt, cloudPath, out)
    expect(count).toBe(n)
    const labels = readLabels(out)
    const flatFrac = [...labels].filter((v) => v === 0).length / n
    expect(flatFrac).toBeGreaterThanOrEqual(0.95)
  }, 600_000)

  it('errors on malformed clouds', async () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'nn-bad-'))
    const bad = path.join(dir, 'bad.txt')
    fs.writeFileSync(bad, 'not a cloud\n')
    await expect(inferFile('nope.json', bad, path.join(dir, 'o'))).rejects.toThrow()
  })
})

describe('held-out accuracy on synthesized roofs', () => {
  it('reaches 80% point accuracy trained on 50 roofs per class', async () => {
    const work = fs.mkdtempSync(path.join(os.tmpdir(), 'nn-acc-'))
    // training and validation sets from the reconstruction pipeline's
    // synthesizer, with disjoint source roofs (different seeds)
    execSync(
      `python3 -m rooffit.cli synth --out ${work}/train --count 50 --seed 1`,
      { stdio: 'ignore' },
    )
    execSync(
      `python3 -m rooffit.cli synth --out ${work}/val --count 12 --seed 2`,
      { stdio: 'ignore' },
    )
    const { net, log } = await train(
      `${work}/train/manifest.txt`,
      {
        epochs: 30,
        batchSize: 16,
        pointsPerSample: 192,
        learningRate: 0.002,
        seed: 3,
      },
      `${work}/val/manifest.txt`,
    )
    const final = log[log.length - 1]
    expect(final.valAccuracy).toBeGreaterThanOrEqual(0.8)
    // sanity: the network, not the prior, is doing the work
    expect(final.trainAccuracy).toBeGreaterThanOrEqual(0.8)
  }, 1_200_000)
})
