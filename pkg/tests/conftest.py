"""Shared fixtures. Eigensolves on the full 200x200 grid are cached per
session because several test modules reuse them."""

from __future__ import annotations

import functools

import pytest

from hopfmix.core import ModelParams, build_grid
from hopfmix.eigensolver import ArnoldiOptions, solve_mixing_spectrum
from hopfmix.fokker_planck import assemble

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def mixing_spectrum(delta, gamma, beta, epsilon, k=20, selection="shift_invert", n=200):
    params = ModelParams(delta, gamma, beta, epsilon)
    grid = build_grid(params, n, n)
    gen = assemble(params, grid)
    return gen, solve_mixing_spectrum(gen, k, ArnoldiOptions(selection=selection))


@pytest.fixture(scope="session")
def spectrum_cache():
    return mixing_spectrum


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical check")
    config.addinivalue_line("markers", "acceptance: acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
