import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // the live suite boots real orchestrator/agent processes
    testTimeout: 60_000,
    hookTimeout: 60_000,
    fileParallelism: false,
  },
});
