import numpy as np

from time import perf_counter
from collections import deque


def time_hms(time_float: float) -> tuple:
	hours = int(time_float // 3600)
	minutes = int((time_float - hours * 3600) // 60)
	seconds = int(time_float % 60)

	return hours, minutes, seconds


class Timer:
    """
    Iteration timer for optimizer runs. Keeps a sliding window of
    iteration durations for the remaining-time estimate, and the
    elapsed milliseconds used for the optional wall_ms trace column.
    """

    def __init__(self, total_iter: int, dsize: int = 50):
        self.total_iter = total_iter
        self.dsize = dsize
        self.reset()

    def update(self, i=1):
        self.previous_time = self.current_time
        self.current_time = perf_counter()
        self.time_list.append(self.current_time - self.previous_time)
        self.current_iter = min(self.current_iter + i, self.total_iter)

    def mean_time(self) -> float:
        return float(np.mean(self.time_list)) if self.time_list else 0.0

    def elapsed(self) -> float:
        return self.current_time - self.start_time

    def elapsed_ms(self) -> float:
        return (perf_counter() - self.start_time) * 1000.0

    def remaining(self) -> float:
        return self.mean_time() * (self.total_iter - self.current_iter)

    def reset(self):
        self.start_time = perf_counter()
        self.previous_time = self.start_time
        self.current_time = self.start_time
        self.time_list = deque(maxlen=self.dsize)
        self.current_iter = 0
