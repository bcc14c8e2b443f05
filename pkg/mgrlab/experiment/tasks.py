"""This file handles the worker tasks for the experiment part."""

from celery import shared_task


# This function runs one experiment cell on a worker.
@shared_task(name="mgrlab.run_cell")
def run_cell(config_data, method, seed, lam, cell_dir):
    """Train one (method, seed, lambda) cell and return its JSON summary."""
    from mgrlab.experiment.runner import execute_cell

    return execute_cell(config_data, method, seed, lam, cell_dir)
