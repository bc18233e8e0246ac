/**
 * CLI: `train --manifest M --out CKPT [...]` and
 *      `infer --ckpt CKPT --in CLOUD --out LABELS`.
 */

import { inferFile } from './infer.js'
import { DEFAULT_TRAIN, train, writeMetricsLog } from './train.js'

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>()
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i]
    if (!a.startsWith('--')) throw new Error(`unexpected argument ${a}`)
    const name = a.slice(2)
    if (name.startsWith('no-')) {
      flags.set(name.slice(3), 'false')
      continue
    }
    const value = argv[i + 1]
    if (value === undefined || value.startsWith('--')) {
      flags.set(name, 'true')
    } else {
      flags.set(name, value)
      i++
    }
  }
  return flags
}

function need(flags: Map<string, string>, name: string): string {
  const v = flags.get(name)
  if (!v) throw new Error(`missing required flag --${name}`)
  return v
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv
  try {
    if (command === 'train') {
      const flags = parseFlags(rest)
      const manifest = need(flags, 'manifest')
      const out = need(flags, 'out')
      const cfg = {
        epochs: parseInt(flags.get('epochs') ?? String(DEFAULT_TRAIN.epochs), 10),
        batchSize: parseInt(
          flags.get('batch-size') ?? String(DEFAULT_TRAIN.batchSize),
          10,
        ),
        pointsPerSample: parseInt(
          flags.get('points') ?? String(DEFAULT_TRAIN.pointsPerSample),
          10,
        ),
        learningRate: parseFloat(
          flags.get('lr') ?? String(DEFAULT_TRAIN.learningRate),
        ),
        seed: parseInt(flags.get('seed') ?? '0', 10),
        augment: {
          rotation: flags.get('rotation') !== 'false',
          scaling: flags.get('scaling') !== 'false',
          translation: flags.get('translation') !== 'false',
        },
      }
      const { net, log } = await train(manifest, cfg, flags.get('val-manifest'))
      await net.save(out)
      writeMetricsLog(log, out + '.metrics.json')
      const last = log[log.length - 1]
      console.log(
        `trained ${log.length} epochs; ` +
          `final loss ${last.loss.toFixed(4)}, ` +
          `train acc ${(last.trainAccuracy * 100).toFixed(1)}%, ` +
          `val acc ${(last.valAccuracy * 100).toFixed(1)}%`,
      )
      console.log(`checkpoint: ${out}`)
      return 0
    }
    if (command === 'infer') {
      const flags = parseFlags(rest)
      const n = await inferFile(need(flags, 'ckpt'), need(flags, 'in'), need(flags, 'out'))
      console.log(`labeled ${n} points`)
      return 0
    }
    console.error('usage: cli.js train|infer [flags]')
    return 2
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

const invokedDirectly =
  process.argv[1] && import.meta.url.endsWith(process.argv[1].split('/').pop()!)
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code
  })
}
