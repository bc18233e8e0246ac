import { defineConfig } from 'vitest/config'

export default defineConfig({
  test: {
    testTimeout: 1_200_000,
    hookTimeout: 120_000,
    // training tests share tfjs state; keep them in one worker
    pool: 'forks',
    maxWorkers: 1,
    minWorkers: 1,
  },
})
