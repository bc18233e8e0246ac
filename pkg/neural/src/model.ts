/**
 * A PointNet-style per-point classifier.
 *
 * Shared per-point MLP -> symmetric max aggregation into a global feature
 * -> global concatenated back onto every per-point feature -> per-point
 * classifier head.  Every per-point op is a 1x1 "convolution" (matmul), so
 * permuting the input points permutes the outputs exactly.
 */

import * as tf from '@tensorflow/tfjs'

import { FEATURE_DIM, NUM_CLASSES, makeRng } from './data.js'

export interface NetConfig {
  pointFeatureDim: number // per-point encoder output width (k)
  globalFeatureDim: number // aggregated cloud descriptor width (c)
  classes: number
  seed: number
}

export const DEFAULT_NET: NetConfig = {
  pointFeatureDim: 64,
  globalFeatureDim: 64,
  classes: NUM_CLASSES,
  seed: 0,
}

interface LayerSpec {
  name: string
  inDim: number
  outDim: number
}

function layerSpecs(cfg: NetConfig): LayerSpec[] {
  const k = cfg.pointFeatureDim
  const c = cfg.globalFeatureDim
  return [
    { name: 'enc1', inDim: FEATURE_DIM, outDim: 32 },
    { name: 'enc2', inDim: 32, outDim: k },
    { name: 'glob1', inDim: k, outDim: c },
    { name: 'glob2', inDim: c, outDim: c },
    { name: 'head1', inDim: k + c, outDim: 128 },
    { name: 'head2', inDim: 128, outDim: 64 },
    { name: 'logits', inDim: 64, outDim: cfg.classes },
  ]
}

export class SegNet {
  readonly cfg: NetConfig
  readonly weights: Map<string, tf.Variable>

  constructor(cfg: NetConfig, weights: Map<string, tf.Variable>) {
    this.cfg = cfg
    this.weights = weights
  }

  /** Fresh network with seeded Glorot-uniform kernels and zero biases. */
  static create(cfg: NetConfig = DEFAULT_NET): SegNet {
    const rng = makeRng(cfg.seed ^ 0x5f3759df)
    const weights = new Map<string, tf.Variable>()
    for (const spec of layerSpecs(cfg)) {
      const limit = Math.sqrt(6 / (spec.inDim + spec.outDim))
      const data = new Float32Array(spec.inDim * spec.outDim)
      for (let i = 0; i < data.length; i++) data[i] = (rng() * 2 - 1) * limit
      weights.set(
        `${spec.name}/kernel`,
        tf.variable(tf.tensor2d(data, [spec.inDim, spec.outDim])),
      )
      weights.set(`${spec.name}/bias`, tf.variable(tf.zeros([spec.outDim])))
    }
    return new SegNet(cfg, weights)
  }

  private dense(name: string, x: tf.Tensor, relu = true): tf.Tensor {
    const kernel = this.weights.get(`${name}/kernel`)!
    const bias = this.weights.get(`${name}/bias`)!
    // [batch, points, in] -> [batch, points, out], as one flat 2D matmul
    const [b, n] = [x.shape[0]!, x.shape[1]!]
    const flat = tf.matMul(x.reshape([b * n, kernel.shape[0]!]), kernel)
    const y = tf.add(flat.reshape([b, n, kernel.shape[1]!]), bias)
    return relu ? tf.relu(y) : y
  }

  /** Per-point logits [batch, points, classes]. */
  logits(features: tf.Tensor3D): tf.Tensor3D {
    return tf.tidy(() => {
      const h1 = this.dense('enc1', features)
      const local = this.dense('enc2', h1)
      const g1 = this.dense('glob1', local)
      const pre = this.dense('glob2', g1)
      const global = tf.max(pre, 1) // symmetric over the point axis
      const tiled = tf.tile(global.expandDims(1), [1, features.shape[1]!, 1])
      const joined = tf.concat([local, tiled], -1)
      const h4 = this.dense('head1', joined)
      const h5 = this.dense('head2', h4)
      return this.dense('logits', h5, false) as tf.Tensor3D
    })
  }

  trainables(): tf.Variable[] {
    return [...this.weights.values()]
  }

  /** Predicted class per point for one cloud, in input order. */
  predict(features: Float32Array, n: number): Int32Array {
    return tf.tidy(() => {
      const x = tf.tensor3d(features, [1, n, FEATURE_DIM])
      const out = tf.argMax(this.logits(x), -1)
      return Int32Array.from(out.dataSync())
    })
  }

  async save(file: string): Promise<void> {
    const fs = await import('node:fs')
    const payload: Record<string, unknown> = { config: this.cfg, weights: {} }
    const bag = payload.weights as Record<string, { shape: number[]; data: string }>
    for (const [name, v] of this.weights) {
      const data = Buffer.from(new Float32Array(await v.data()).buffer)
      bag[name] = { shape: v.shape.slice(), data: data.toString('base64') }
    }
    fs.writeFileSync(file, JSON.stringify(payload))
  }

  static async load(file: string): Promise<SegNet> {
    const fs = await import('node:fs')
    const payload = JSON.parse(fs.readFileSync(file, 'utf8'))
    const cfg = payload.config as NetConfig
    if (cfg.classes !== NUM_CLASSES) {
      throw new Error(`checkpoint has ${cfg.classes} classes, expected ${NUM_CLASSES}`)
    }
    const weights = new Map<string, tf.Variable>()
    for (const [name, entry] of Object.entries(payload.weights) as [
      string,
      { shape: number[]; data: string },
    ][]) {
      const buf = Buffer.from(entry.data, 'base64')
      const arr = new Float32Array(buf.buffer, buf.byteOffset, buf.byteLength / 4)
      weights.set(name, tf.variable(tf.tensor(Array.from(arr), entry.shape)))
    }
    return new SegNet(cfg, weights)
  }
}
