import time


def pytest_configure(config):
    # Wall-clock anchor for the suite runtime budget check at the end of
    # the run (test_zz_suite_budget.py).
    config._suite_start = time.perf_counter()
