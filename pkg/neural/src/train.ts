/**
 * Training loop: Adam with step-decayed learning rate, cross-entropy over
 * per-point predictions, optional rotation/scaling/translation
 * augmentation, per-epoch train/validation accuracy logging.
 */

import * as fs from 'node:fs'

import * as tf from '@tensorflow/tfjs'

import { ensureBackend } from './backend.js'
import {
  AugmentOptions,
  Cloud,
  FEATURE_DIM,
  ManifestEntry,
  NUM_CLASSES,
  featurize,
  makeRng,
  readCloud,
  readManifest,
  sampleForTraining,
} from './data.js'
import { DEFAULT_NET, SegNet } from './model.js'

export interface TrainConfig {
  learningRate: number
  decayFactor: number
  decaySteps: number
  batchSize: number
  epochs: number
  pointsPerSample: number
  augment: AugmentOptions
  seed: number
  valFraction: number
}

export const DEFAULT_TRAIN: TrainConfig = {
  learningRate: 0.001,
  decayFactor: 0.7,
  decaySteps: 20000,
  batchSize: 32,
  epochs: 100,
  pointsPerSample: 256,
  augment: { rotation: true, scaling: true, translation: true },
  seed: 0,
  valFraction: 0.15,
}

export interface EpochLog {
  epoch: number
  loss: number
  trainAccuracy: number
  valAccuracy: number
  learningRate: number
}

function checkClassCoverage(entries: ManifestEntry[]): void {
  const totals: Record<string, number> = {}
  for (const e of entries) {
    for (const [k, v] of Object.entries(e.counts)) {
      totals[k] = (totals[k] ?? 0) + v
    }
  }
  const required = ['flat', 'sloped', 'cylindrical', 'spherical']
  const missing = required.filter((k) => !(totals[k] > 0))
  if (missing.length) {
    throw new Error(`training data has no points of class(es): ${missing.join(', ')}`)
  }
}

export function pointAccuracy(
  net: SegNet,
  clouds: Cloud[],
  features?: Float32Array[],
): number {
  let total = 0
  let correct = 0
  for (let c = 0; c < clouds.length; c++) {
    const cloud = clouds[c]
    if (!cloud.labels) continue
    // inference-style features: no augmentation, all points, input order
    const pred = net.predict(features ? features[c] : featurize(cloud), cloud.n)
    for (let i = 0; i < cloud.n; i++) {
      total += 1
      if (pred[i] === cloud.labels[i]) correct += 1
    }
  }
  return total ? correct / total : 0
}

export interface TrainResult {
  net: SegNet
  log: EpochLog[]
  bestValAccuracy: number
}

export async function train(
  manifestPath: string,
  trainCfg: Partial<TrainConfig> = {},
  valManifestPath?: string,
): Promise<TrainResult> {
  await ensureBackend()
  const cfg: TrainConfig = { ...DEFAULT_TRAIN, ...trainCfg }
  const entries = readManifest(manifestPath)
  checkClassCoverage(entries)
  const clouds = entries.map((e) => readCloud(e.file))
  const rng = makeRng(cfg.seed ^ 0x9e3779b9)

  let trainClouds: Cloud[]
  let valClouds: Cloud[]
  if (valManifestPath) {
    trainClouds = clouds
    valClouds = readManifest(valManifestPath).map((e) => readCloud(e.file))
  } else {
    // deterministic split
    const order = clouds.map((_, i) => i)
    for (let i = order.length - 1; i > 0; i--) {
      const j = Math.floor(rng() * (i + 1))
      ;[order[i], order[j]] = [order[j], order[i]]
    }
    const nVal = Math.max(1, Math.floor(clouds.length * cfg.valFraction))
    valClouds = order.slice(0, nVal).map((i) => clouds[i])
    trainClouds = order.slice(nVal).map((i) => clouds[i])
  }

  const trainFeatures = trainClouds.map((c) => featurize(c))
  const valFeatures = valClouds.map((c) => featurize(c))
  const net = SegNet.create({ ...DEFAULT_NET, seed: cfg.seed })
  const optimizer = tf.train.adam(cfg.learningRate)
  const log: EpochLog[] = []
  let bestVal = -1
  let bestWeights: Map<string, Float32Array> | null = null
  let step = 0
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    const order = trainClouds.map((_, i) => i)
    for (let i = order.length - 1; i > 0; i--) {
      const j = Math.floor(rng() * (i + 1))
      ;[order[i], order[j]] = [order[j], order[i]]
    }
    let lossSum = 0
    let lossCount = 0
    let hit = 0
    let seen = 0
    for (let lo = 0; lo < order.length; lo += cfg.batchSize) {
      const batchIdx = order.slice(lo, lo + cfg.batchSize)
      const b = batchIdx.length
      const feats = new Float32Array(b * cfg.pointsPerSample * FEATURE_DIM)
      const labels = new Int32Array(b * cfg.pointsPerSample)
      for (let k = 0; k < b; k++) {
        const sample = sampleForTraining(
          trainClouds[batchIdx[k]],
          cfg.pointsPerSample,
          rng,
          cfg.augment,
          trainFeatures[batchIdx[k]],
        )
        feats.set(sample.features, k * cfg.pointsPerSample * FEATURE_DIM)
        labels.set(sample.labels, k * cfg.pointsPerSample)
      }
      const lr =
        cfg.learningRate * Math.pow(cfg.decayFactor, Math.floor(step / cfg.decaySteps))
      ;(optimizer as unknown as { learningRate: number }).learningRate = lr
      const x = tf.tensor3d(feats, [b, cfg.pointsPerSample, FEATURE_DIM])
      const y = tf.tensor1d(Int32Array.from(labels), 'int32')
      const lossTensor = optimizer.minimize(
        () => {
          const logits = net.logits(x).reshape([b * cfg.pointsPerSample, NUM_CLASSES])
          const oneHot = tf.oneHot(y, NUM_CLASSES)
          return tf.losses.softmaxCrossEntropy(oneHot, logits) as tf.Scalar
        },
        true,
        net.trainables(),
      )!
      const lossVal = (await lossTensor.data())[0]
      lossSum += lossVal
      lossCount += 1
      // batch accuracy, reusing the forward pass cheaply
      const pred = tf.tidy(() =>
        Int32Array.from(tf.argMax(net.logits(x), -1).dataSync()),
      )
      for (let i = 0; i < pred.length; i++) {
        seen += 1
        if (pred[i] === labels[i]) hit += 1
      }
      lossTensor.dispose()
      x.dispose()
      y.dispose()
      step += 1
    }
    const entry: EpochLog = {
      epoch,
      loss: lossSum / Math.max(lossCount, 1),
      trainAccuracy: hit / Math.max(seen, 1),
      valAccuracy: pointAccuracy(net, valClouds, valFeatures),
      learningRate:
        cfg.learningRate * Math.pow(cfg.decayFactor, Math.floor(step / cfg.decaySteps)),
    }
    log.push(entry)
    if (entry.valAccuracy > bestVal) {
      bestVal = entry.valAccuracy
      bestWeights = new Map(
        [...net.weights].map(([k, v]) => [k, Float32Array.from(v.dataSync())]),
      )
    }
  }
  // hand back the best-validation checkpoint, not the last epoch
  if (bestWeights) {
    for (const [k, data] of bestWeights) {
      const v = net.weights.get(k)!
      v.assign(tf.tensor(Array.from(data), v.shape))
    }
  }
  return { net, log, bestValAccuracy: bestVal }
}

export function writeMetricsLog(log: EpochLog[], file: string): void {
  fs.writeFileSync(file, JSON.stringify(log, null, 1) + '\n')
}
