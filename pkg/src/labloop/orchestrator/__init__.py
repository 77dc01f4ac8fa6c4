from .scheduler import JobSpec, Scheduler

__all__ = ["JobSpec", "Scheduler"]
