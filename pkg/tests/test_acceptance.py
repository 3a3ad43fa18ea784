"""End-to-end acceptance runs on the shipped configurations (quick numerics)."""

import os
from dataclasses import replace

import pytest

from runner.config import load_config, parse_config
from runner.experiments import run_experiment

CONFIGS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')


def shipped(name):
    return load_config(os.path.join(CONFIGS, name))


def test_free_decay_rate(quick):
    config = shipped('free.json')
    result = run_experiment('decay', config, quick)
    decay = result.summary['decay']
    assert result.passed
    assert decay['deviation'] <= 0.05
    assert decay['amplitude_ratio'] == pytest.approx(0.99, abs=0.05)
    assert not decay['truncated']


def test_well_bound_state_count(quick):
    config = shipped('well.json')
    blocks = dict(config.blocks, spectrum=dict(config.blocks['spectrum'], trend=False))
    result = run_experiment('spectrum', replace(config, blocks=blocks), quick)
    assert result.passed
    assert result.summary['birman_schwinger_count'] == 1
    assert result.summary['spectrum']['negative_count'] == 1
    assert result.summary['regularity']['regular']


def test_quadrature_checks(quick):
    config = parse_config('{"grid": {"n": 16, "L": 4.0}}')
    result = run_experiment('quadrature', config, quick)
    assert result.passed
    lemmas = result.summary['lemmas']
    assert lemmas['L2']['ratio'] <= 1.0
    assert lemmas['L3']['ratio'] <= 1.0


def test_algebra_checks(quick):
    text = ('{"potentials": {"V": {"scalar": [{"kind": "gaussian", "amplitude": -2.0}]}},'
            ' "grid": {"n": 16, "L": 4.0}, "algebra": {"part": "T4", "n_random": 10}}')
    result = run_experiment('algebra', parse_config(text), quick)
    assert result.passed
    assert result.summary['suite']['neumann_residual'] <= 1e-8
    assert result.summary['kernel_mass'] > 0
