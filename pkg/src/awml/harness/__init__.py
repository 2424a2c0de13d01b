from awml.harness.run import HarnessConfig, RunConfig, RunRecord, Trainer, run_awml

__all__ = ["HarnessConfig", "RunConfig", "RunRecord", "Trainer", "run_awml"]
