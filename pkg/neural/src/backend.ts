/**
 * Backend selection: the bundled WASM kernels are an order of magnitude
 * faster than the plain-JS backend and deterministic when pinned to one
 * thread.  Falls back to the JS cpu backend if WASM fails to initialize.
 */

import * as tf from '@tensorflow/tfjs'
import { setThreadsCount } from '@tensorflow/tfjs-backend-wasm'

let ready: Promise<string> | null = null

export function ensureBackend(): Promise<string> {
  if (!ready) {
    ready = (async () => {
      try {
        setThreadsCount(1)
        const ok = await tf.setBackend('wasm')
        if (!ok) throw new Error('wasm backend rejected')
      } catch {
        await tf.setBackend('cpu')
      }
      await tf.ready()
      return tf.getBackend()
    })()
  }
  return ready
}
