"""Exception types shared across the package."""


class ConfigurationError(Exception):
    """A run/config parameter is inconsistent (bad CFL, family mismatch, unknown key)."""


class NonHyperbolicError(ValueError):
    """Closure tail violates the hyperbolicity inequality; no symmetrizer exists."""


class DegenerateSymmetrizerError(ValueError):
    """Cramer denominator is (numerically) zero; symmetrizer undefined."""


class BlowUpError(RuntimeError):
    """Moment solve produced NaN/overflow. Carries the failure time and partial output."""

    def __init__(self, t: float, snapshots=None):
        super().__init__(f"solution blew up at t={t:.6g}")
        self.t = t
        self.snapshots = snapshots if snapshots is not None else []


class TrainingDivergedError(RuntimeError):
    """Loss became NaN during training. Carries epoch/batch/lr diagnostics."""

    def __init__(self, epoch: int, batch: int, lr: float):
        super().__init__(f"NaN loss at epoch {epoch}, batch {batch}, lr {lr:.3g}")
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
