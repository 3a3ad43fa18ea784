import numpy as np
import pytest

from src.ellipsoid import EllipsoidFrame
from src.errors import ConfigurationError, UnsupportedDerivativeError
from src.fields import PotentialSpec
from src.lemmas import LemmaResult, lemma_harness

SPEC = PotentialSpec.single('gaussian', amplitude=1.0, width=1.0, center=(0.2, 0.3, 0.1))
FRAME = EllipsoidFrame((-0.5, 0.0, 0.0), (0.5, 0.0, 0.0))


def test_result_ratio():
    assert LemmaResult('L2', 1.0, 4.0).ratio == 0.25
    assert np.isnan(LemmaResult('L2', 0.0, 0.0).ratio)
    assert LemmaResult('L2', 0.0, 0.0).to_dict()['ratio'] is None
    assert LemmaResult('L2', 1.0, 0.0).ratio == float('inf')


def test_unknown_lemma():
    with pytest.raises(ConfigurationError):
        lemma_harness('L9', SPEC, FRAME)


def test_ball_indicator_has_no_gradient():
    with pytest.raises(UnsupportedDerivativeError):
        lemma_harness('L2', PotentialSpec.single('ball-indicator'), FRAME)


def test_zero_potential_is_undefined():
    result = lemma_harness('L3', PotentialSpec.zero(), FRAME)
    assert result.undefined


@pytest.mark.parametrize('lemma', ['L2', 'L3'])
def test_hardy_type_lemmas_hold_with_unit_constant(quick, lemma):
    # along each ray |f(s)| <= int_s^inf |grad f|, which bounds the ratio by one
    result = lemma_harness(lemma, SPEC, FRAME, quick)
    assert 0 < result.ratio <= 1.0 + 1e-6


@pytest.mark.parametrize('lemma', ['L1', 'L2', 'L3'])
def test_dilation_invariance(quick, lemma):
    s = 2.0
    base = lemma_harness(lemma, SPEC, FRAME, quick)
    dilated = lemma_harness(lemma, SPEC.dilated(s), FRAME.dilated(s), quick)
    assert dilated.ratio == pytest.approx(base.ratio, rel=1e-3)


@pytest.mark.parametrize('lemma', ['L2LOG', 'L3LOG'])
def test_logarithmic_variants_are_finite(quick, lemma):
    result = lemma_harness(lemma, SPEC, FRAME, quick)
    assert np.isfinite(result.ratio)
    assert result.lhs > 0 and result.rhs > 0


def test_first_lemma_closed_form(quick):
    # |f| = 1 near the foci, r = 1: (pi^2 / 4) int_0^acosh 2 cosh(2u) / 2 du = pi^2 sqrt(3) / 4
    flat = PotentialSpec.single('gaussian', amplitude=1.0, width=100.0)
    result = lemma_harness('L1', flat, FRAME, quick)
    assert result.lhs == pytest.approx(np.pi ** 2 * np.sqrt(3) / 4, rel=1e-3)
