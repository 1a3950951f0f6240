import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdis.fusion import LabelField
from mdis.hmt import universal_params
from mdis.saliency import (
    SaliencyMap,
    SaliencyPyramid,
    compute_saliency,
    discriminant_power,
    entropy_bits,
    integrate_max,
    mdis,
    mdis_pyramid,
)
from mdis.synthetic import popout_stimulus


def _h(p):
    """Binary entropy in bits, written out longhand."""
    return -sum(x * np.log2(x) for x in p if x > 0)


def _field(posteriors, parents=None):
    labels = [np.argmax(p, axis=1) for p in posteriors]
    parents = parents or [None] * len(posteriors)
    return LabelField(labels, [None] * len(posteriors), [np.asarray(p, float) for p in posteriors], parents)


# flat test images floor the variance of empty scales, which warns
floored = pytest.mark.filterwarnings("ignore:.*floored:RuntimeWarning")


class TestDiscriminantPower:
    @pytest.mark.parametrize(
        "post, prior, bits",
        [([0.5, 0.5], [0.5, 0.5], 0.0), ([1.0, 0.0], [0.5, 0.5], 1.0), ([0.9, 0.1], [0.5, 0.5], 0.5310)],
    )
    def test_examples(self, post, prior, bits):
        assert float(discriminant_power(post, prior)) == pytest.approx(bits, abs=5e-5)

    def test_exact_value(self):
        expected = 1.0 - _h([0.9, 0.1])
        assert float(discriminant_power([0.9, 0.1], [0.5, 0.5])) == pytest.approx(expected, rel=1e-14)

    def test_clamped_at_zero(self):
        assert float(discriminant_power([0.5, 0.5], [0.9, 0.1])) == 0.0

    @pytest.mark.parametrize("bad", [[0.5, 0.6], [1.2, -0.2], [0.5, 0.5, 0.0]])
    def test_rejects_non_distributions(self, bad):
        with pytest.raises(ValueError, match="normalised"):
            discriminant_power(bad, [0.5, 0.5])
        with pytest.raises(ValueError, match="normalised"):
            discriminant_power([0.5, 0.5], bad)

    def test_tolerance_is_1e9(self):
        discriminant_power([0.5, 0.5 + 5e-10], [0.5, 0.5])
        with pytest.raises(ValueError):
            discriminant_power([0.5, 0.5 + 5e-9], [0.5, 0.5])

    @settings(max_examples=100)
    @given(st.floats(0, 1), st.floats(0, 1))
    def test_bounded_by_prior_entropy(self, a, b):
        i = float(discriminant_power([a, 1 - a], [b, 1 - b]))
        assert 0.0 <= i <= float(entropy_bits([b, 1 - b])) + 1e-12 <= 1.0 + 1e-12


class TestPyramid:
    def test_uninformative_scale_is_zero(self):
        pyr = mdis_pyramid(_field([np.full((4, 2), 0.5)]), prior="mean")
        np.testing.assert_array_equal(pyr.scales[0], 0.0)

    def test_half_and_half_gives_one_bit(self):
        post = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        pyr = mdis_pyramid(_field([post]), prior="mean")
        np.testing.assert_allclose(pyr.scales[0], 1.0)
        np.testing.assert_allclose(pyr.prior_entropy[0], 1.0)

    def test_mean_prior_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = rng.random(4)
            post = np.column_stack([a, 1 - a])
            pyr = mdis_pyramid(_field([post]), prior="mean")
            m = post.mean(axis=0)
            expected = [max(_h(m) - _h(p), 0.0) for p in post]
            np.testing.assert_allclose(pyr.scales[0], expected, atol=1e-12)

    def test_window_prior_oracle(self):
        # 2x2 root grid, 4x4 child grid; each child is scored against the
        # mean posterior of its parent's four children
        rng = np.random.default_rng(1)
        a0, a1 = rng.random(4), rng.random(16)
        root = np.column_stack([a0, 1 - a0])
        kids = np.column_stack([a1, 1 - a1])
        r, c = np.divmod(np.arange(16), 4)
        parents = (r // 2) * 2 + c // 2
        pyr = mdis_pyramid(_field([root, kids], [None, parents]), shapes=[(2, 2), (4, 4)])
        m0 = root.mean(axis=0)
        np.testing.assert_allclose(pyr.scales[0].ravel(), [max(_h(m0) - _h(p), 0) for p in root], atol=1e-12)
        for i in range(16):
            m = kids[parents == parents[i]].mean(axis=0)
            assert pyr.scales[1].ravel()[i] == pytest.approx(max(_h(m) - _h(kids[i]), 0), abs=1e-12)
            assert pyr.prior_entropy[1].ravel()[i] == pytest.approx(_h(m), abs=1e-12)

    def test_label_fraction_prior(self):
        post = np.array([[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.6, 0.4]])
        pyr = mdis_pyramid(_field([post]), prior="labels")
        np.testing.assert_allclose(pyr.prior_entropy[0], _h([0.75, 0.25]))

    @floored
    def test_bounds_hold_on_a_real_image(self):
        img = np.random.default_rng(2).random((64, 64)) ** 3
        res = mdis(img, "thmt", scales=4)
        for i, h in zip(res.pyramid.scales, res.pyramid.prior_entropy):
            assert np.all(i >= 0)
            assert np.all(i <= h + 1e-12)
            assert np.all(h <= 1 + 1e-12)

    def test_errors(self):
        with pytest.raises(ValueError, match="empty"):
            mdis_pyramid(_field([np.zeros((0, 2))]))
        with pytest.raises(ValueError, match="prior"):
            mdis_pyramid(_field([np.full((2, 2), 0.5)]), prior="median")


class TestIntegrate:
    def test_single_scale(self):
        grid = np.arange(4.0).reshape(2, 2)
        out = integrate_max(SaliencyPyramid([grid], [grid]), (8, 8))
        np.testing.assert_array_equal(out, np.kron(grid, np.ones((4, 4))))

    def test_three_values(self):
        pyr = SaliencyPyramid([np.full((1, 1), 0.2), np.full((2, 2), 0.7), np.full((4, 4), 0.5)], [None] * 3)
        out, src = integrate_max(pyr, (4, 4), return_scale=True)
        np.testing.assert_array_equal(out, 0.7)
        np.testing.assert_array_equal(src, 2)

    def test_ties_credit_finest_scale(self):
        pyr = SaliencyPyramid([np.full((1, 1), 0.4), np.full((2, 2), 0.4)], [None] * 2)
        _, src = integrate_max(pyr, (2, 2), return_scale=True)
        np.testing.assert_array_equal(src, 2)

    def test_nested_loop_oracle(self):
        rng = np.random.default_rng(3)
        grids = [rng.random((2 ** j, 2 ** j)) for j in range(5)]
        out = integrate_max(SaliencyPyramid(grids, [None] * 5), (32, 32))
        for y, x in itertools.product(range(32), range(32)):
            best = -np.inf
            for g in grids:
                f = 32 // g.shape[0]
                best = max(best, g[y // f, x // f])
            assert out[y, x] == best

    def test_dominates_every_scale(self):
        rng = np.random.default_rng(4)
        grids = [rng.random((2 ** j, 2 ** j)) for j in range(1, 5)]
        out = integrate_max(SaliencyPyramid(grids, [None] * 4), (64, 64))
        for g in grids:
            f = 64 // g.shape[0]
            assert np.all(out >= np.kron(g, np.ones((f, f))))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            integrate_max(SaliencyPyramid([np.zeros((3, 3))], [None]), (8, 8))
        with pytest.raises(ValueError, match="empty"):
            integrate_max(SaliencyPyramid([], []), (8, 8))


@floored
class TestPipeline:
    @pytest.mark.parametrize("variant", ["uhmt", "thmt", "vhmt"])
    def test_constant_image_is_near_zero(self, variant):
        smap = compute_saliency(np.full((64, 64), 0.3), variant, scales=4)
        assert smap.values.shape == (64, 64)
        assert np.all(np.isfinite(smap.values))
        assert np.abs(smap.values).max() < 1e-6

    @pytest.mark.parametrize("variant", ["uhmt", "thmt", "vhmt"])
    @pytest.mark.parametrize("texture, origin", [("noise", None), ("checker", (40, 176)), ("stripes", (160, 24))])
    def test_popout(self, variant, texture, origin):
        img, mask = popout_stimulus(texture=texture, origin=origin, seed=1)
        m = compute_saliency(img, variant).values
        assert m[mask].mean() > 2 * m[~mask].mean()

    @pytest.mark.parametrize("variant", ["uhmt", "thmt", "vhmt"])
    def test_bit_identical_reruns(self, variant):
        img = np.random.default_rng(5).random((128, 128))
        a = compute_saliency(img, variant)
        b = compute_saliency(img, variant)
        assert a.values.tobytes() == b.values.tobytes()

    @pytest.mark.parametrize("variant", ["uhmt", "thmt"])
    def test_offset_invariance(self, variant):
        img = 0.6 * np.random.default_rng(6).random((64, 64))
        a = mdis(img, variant, scales=4)
        b = mdis(img + 0.25, variant, scales=4)
        for ga, gb in zip(a.pyramid.scales, b.pyramid.scales):
            np.testing.assert_allclose(ga, gb, atol=1e-9)

    def test_map_selection_and_tags(self):
        res = mdis(np.random.default_rng(7).random((64, 64)), "thmt", scales=3)
        assert res.map(0).tag == "THMT0"
        assert res.map(3).tag == "THMT3"
        for k in range(1, 4):
            assert np.all(res.map(0).values >= res.map(k).values)
        with pytest.raises(ValueError):
            res.map(4)

    def test_uhmt_uses_finest_universal_scales(self):
        res = mdis(np.random.default_rng(8).random((64, 64)), "uhmt", scales=3)
        u = universal_params()
        np.testing.assert_array_equal(res.params.emission, u.emission[-3:])
        np.testing.assert_allclose(res.params.root_prior, u.root_prior @ u.transitions[0] @ u.transitions[1])
        assert res.trace == []

    def test_uhmt_needs_enough_scales(self):
        with pytest.raises(ValueError, match="universal"):
            mdis(np.zeros((128, 128)), "uhmt", scales=6)

    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="variant"):
            mdis(np.zeros((16, 16)), "xhmt", scales=2)

    def test_non_dyadic_input_is_prepared(self):
        smap = compute_saliency(np.random.default_rng(9).random((90, 70)), "thmt", scales=3)
        assert smap.values.shape == (64, 64)
        assert smap.seconds > 0


def test_normalized_copy():
    m = SaliencyMap(np.array([[1.0, 3.0], [2.0, 5.0]]), "thmt", 0)
    np.testing.assert_allclose(m.normalized, [[0, 0.5], [0.25, 1]])
    assert np.all(SaliencyMap(np.ones((2, 2)), "thmt", 0).normalized == 0)
