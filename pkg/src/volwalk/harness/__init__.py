"""Scene files, evaluation planes, run orchestration, outputs and validation suites."""
