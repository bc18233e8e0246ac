/** Checkpointed inference: one label per input point, in input order. */

import { ensureBackend } from './backend.js'
import { featurize, readCloud, writeLabels } from './data.js'
import { SegNet } from './model.js'

export async function inferFile(
  ckptPath: string,
  cloudPath: string,
  outPath: string,
): Promise<number> {
  await ensureBackend()
  const net = await SegNet.load(ckptPath)
  const cloud = readCloud(cloudPath)
  const labels = net.predict(featurize(cloud), cloud.n)
  writeLabels(labels, outPath)
  return cloud.n
}
