import * as fs from 'node:fs'
import * as os from 'node:os'
import * as path from 'node:path'

import { describe, expect, it } from 'vitest'

import {
  FEATURE_DIM,
  featurize,
  makeRng,
  parseCloud,
  readLabels,
  readManifest,
  sampleForTraining,
  writeLabels,
} from '../src/data.js'

function tmpFile(name: string, content: string): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'nn-data-'))
  const p = path.join(dir, name)
  fs.writeFileSync(p, content)
  return p
}

const CLOUD3 = [
  'rooffit v1 n=3 cols=x,y,z,r,g,b,label',
  '0.0 0.0 1.0 10 20 30 0',
  '1.0 0.0 1.5 40 50 60 1',
  '0.0 1.0 2.0 70 80 90 3',
  '',
].join('\n')

describe('cloud parsing', () => {
  it('round-trips coordinates, colors, labels', () => {
    const cloud = parseCloud(CLOUD3)
    expect(cloud.n).toBe(3)
    expect(cloud.xyz[3]).toBe(1.0)
    expect(cloud.rgb[8]).toBe(90)
    expect([...cloud.labels!]).toEqual([0, 1, 3])
  })

  it('accepts space-separated column lists', () => {
    const text = CLOUD3.replace('cols=x,y,z,r,g,b,label', 'cols=x y z r g b label')
    expect(parseCloud(text).n).toBe(3)
  })

  it('rejects a bad header', () => {
    expect(() => parseCloud('nonsense\n')).toThrow(/line 1/)
  })

  it('rejects a short row with its line number', () => {
    const text = 'rooffit v1 n=2 cols=x,y,z,r,g,b\n0 0 0 1 2 3\n0 0 0 1 2\n'
    expect(() => parseCloud(text)).toThrow(/line 3/)
  })

  it('rejects an empty cloud', () => {
    expect(() => parseCloud('rooffit v1 n=0 cols=x,y,z,r,g,b\n')).toThrow(/empty/)
  })

  it('rejects unknown label codes', () => {
    const text = 'rooffit v1 n=1 cols=x,y,z,r,g,b,label\n0 0 0 1 2 3 7\n'
    expect(() => parseCloud(text)).toThrow(/label/)
  })
})

describe('label files', () => {
  it('round-trips and enforces the count', () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), 'nn-lab-'))
    const p = path.join(dir, 'l.labels')
    writeLabels([0, 3, 2], p)
    expect([...readLabels(p)]).toEqual([0, 3, 2])
    fs.writeFileSync(p, 'rooffit-labels v1 n=4\n0\n1\n')
    expect(() => readLabels(p)).toThrow(/n=4/)
  })
})

describe('manifest', () => {
  it('parses entries with class counts', () => {
    const p = tmpFile(
      'manifest.txt',
      'a.txt flat=10 sloped=0 cylindrical=5 spherical=0\n' +
        'b.txt flat=0 sloped=7 cylindrical=0 spherical=2\n',
    )
    const entries = readManifest(p)
    expect(entries).toHaveLength(2)
    expect(entries[0].counts.flat).toBe(10)
    expect(entries[1].file.endsWith('b.txt')).toBe(true)
  })
})

describe('featurization', () => {
  it('centers, scales into the unit ball, and appends geometry channels', () => {
    const cloud = parseCloud(CLOUD3)
    const f = featurize(cloud)
    expect(f).toHaveLength(3 * FEATURE_DIM)
    // centered coordinates sum to ~0
    let sx = 0
    for (let i = 0; i < 3; i++) sx += f[i * FEATURE_DIM]
    expect(Math.abs(sx)).toBeLessThan(1e-6)
    for (let i = 0; i < 3; i++) {
      const r = Math.hypot(
        f[i * FEATURE_DIM],
        f[i * FEATURE_DIM + 1],
        f[i * FEATURE_DIM + 2],
      )
      expect(r).toBeLessThanOrEqual(1 + 1e-6)
    }
  })

  it('sampling is deterministic for a fixed rng seed', () => {
    const cloud = parseCloud(CLOUD3)
    const aug = { rotation: true, scaling: true, translation: true }
    const a = sampleForTraining(cloud, 8, makeRng(5), aug)
    const b = sampleForTraining(cloud, 8, makeRng(5), aug)
    expect([...a.features]).toEqual([...b.features])
    expect([...a.labels]).toEqual([...b.labels])
  })
})
