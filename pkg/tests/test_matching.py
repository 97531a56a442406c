import numpy as np
import pytest

from typegraph import autodiff as ad
from typegraph import matching
from typegraph.autodiff import Tensor
from typegraph.encoders import ContextEncoding
from typegraph.model import ModelConfig


def scalar_tanh_matvec(W, x):
    return np.tanh(x @ W)


class TestProjectMention:
    def test_zero_maps_to_zero(self):
        W1 = Tensor(np.random.default_rng(0).normal(size=(6, 4)))
        out = matching.project_mention(Tensor(np.zeros((1, 6))), W1)
        assert np.array_equal(out.data, np.zeros((1, 4)))

    def test_basis_vector_selects_row(self):
        rng = np.random.default_rng(1)
        W1 = Tensor(rng.normal(size=(6, 4)))
        e2 = np.zeros((1, 6))
        e2[0, 2] = 1.0
        out = matching.project_mention(Tensor(e2), W1)
        assert np.allclose(out.data, np.tanh(W1.data[2][None]), atol=1e-15)

    def test_random_case_scalar_oracle(self):
        rng = np.random.default_rng(2)
        M = rng.normal(size=(1, 6))
        W1v = rng.normal(size=(6, 4))
        out = matching.project_mention(Tensor(M), Tensor(W1v))
        # independent elementwise recomputation
        expected = [
            np.tanh(sum(M[0, i] * W1v[i, j] for i in range(6))) for j in range(4)
        ]
        assert np.allclose(out.data[0], expected, atol=1e-12)
        assert np.all(np.abs(out.data) < 1.0)


class TestAttend:
    def test_single_token(self):
        rng = np.random.default_rng(3)
        h = [Tensor(rng.normal(size=(1, 2)))]
        alpha, r_c = matching.attend(
            Tensor(rng.normal(size=(1, 2))), h, Tensor(np.eye(2)), np.ones((1, 1))
        )
        assert alpha.data.tolist() == [[1.0]]
        assert np.allclose(r_c.data, h[0].data, atol=1e-15)

    def test_closed_form(self):
        # Wa=I, m_proj=[1,0], rows [1,0] and [0,1]: scores (1,0),
        # softmax -> (0.7311, 0.2689), r_c = weighted rows.
        m_proj = Tensor(np.array([[1.0, 0.0]]))
        h = [Tensor(np.array([[1.0, 0.0]])), Tensor(np.array([[0.0, 1.0]]))]
        alpha, r_c = matching.attend(m_proj, h, Tensor(np.eye(2)), np.ones((1, 2)))
        w = np.exp([1.0, 0.0])
        w /= w.sum()
        assert np.allclose(alpha.data[0], w, atol=1e-12)
        assert np.allclose(r_c.data[0], w, atol=1e-12)

    def test_sharpening_decreases_entropy(self):
        rng = np.random.default_rng(4)
        h = [Tensor(rng.normal(size=(1, 3))) for _ in range(4)]
        Wa = Tensor(rng.normal(size=(3, 3)))
        m = rng.normal(size=(1, 3))
        mask = np.ones((1, 4))

        def entropy(m_scaled):
            alpha, _ = matching.attend(Tensor(m_scaled), h, Wa, mask)
            p = alpha.data[0]
            return -(p * np.log(p)).sum()

        assert entropy(2 * m) < entropy(m)

    def test_all_masked_rejected(self):
        h = [Tensor(np.zeros((1, 2)))]
        with pytest.raises(ValueError):
            matching.attend(
                Tensor(np.zeros((1, 2))), h, Tensor(np.eye(2)), np.zeros((1, 1))
            )


class TestFuseGate:
    def make_params(self, h_c, rng):
        params, _ = matching.init_matching_params(h_c, h_c, rng)
        return params

    def test_gate_saturated_high(self):
        rng = np.random.default_rng(5)
        params = self.make_params(3, rng)
        params["Wg_b"].data[...] = 50.0  # force g -> 1
        r_c = Tensor(rng.normal(size=(1, 3)))
        m_proj = Tensor(rng.normal(size=(1, 3)))
        o, r, g = matching.fuse_gate(r_c, m_proj, params)
        assert np.allclose(o.data, r.data, atol=1e-6)

    def test_gate_saturated_low(self):
        rng = np.random.default_rng(6)
        params = self.make_params(3, rng)
        params["Wg_b"].data[...] = -50.0  # force g -> 0
        r_c = Tensor(rng.normal(size=(1, 3)))
        m_proj = Tensor(rng.normal(size=(1, 3)))
        o, _, _ = matching.fuse_gate(r_c, m_proj, params)
        assert np.allclose(o.data, m_proj.data, atol=1e-6)

    def test_scalar_oracle(self):
        rng = np.random.default_rng(7)
        params = self.make_params(3, rng)
        r_c_v = rng.normal(size=(1, 3))
        m_v = rng.normal(size=(1, 3))
        o, r, g = matching.fuse_gate(Tensor(r_c_v), Tensor(m_v), params)

        z = np.concatenate([r_c_v, m_v, r_c_v - m_v], axis=1)
        pre_r = z @ params["Wr"].data + params["Wr_b"].data
        u = np.sqrt(2 / np.pi) * (pre_r + 0.044715 * pre_r ** 3)
        r_exp = 0.5 * pre_r * (1 + np.tanh(u))
        g_exp = 1 / (1 + np.exp(-(z @ params["Wg"].data + params["Wg_b"].data)))
        assert np.allclose(r.data, r_exp, atol=1e-12)
        assert np.allclose(g.data, g_exp, atol=1e-12)
        assert np.allclose(o.data, g_exp * r_exp + (1 - g_exp) * m_v, atol=1e-12)

    def test_gate_identity_holds_exactly(self):
        rng = np.random.default_rng(8)
        params = self.make_params(4, rng)
        r_c = Tensor(rng.normal(size=(2, 4)))
        m_proj = Tensor(rng.normal(size=(2, 4)))
        o, r, g = matching.fuse_gate(r_c, m_proj, params)
        assert np.array_equal(
            o.data, g.data * r.data + (1 - g.data) * m_proj.data
        )
        assert np.all((g.data > 0) & (g.data < 1))


class TestAssembleFeature:
    def test_dimension(self):
        cfg = ModelConfig(dropout_fused=0.0)
        o = Tensor(np.ones((1, 200)))
        C = Tensor(np.ones((1, 200)))
        f = matching.assemble_feature(o, C, cfg)
        assert f.shape == (1, 400)

    def test_eval_deterministic(self):
        cfg = ModelConfig(dropout_fused=0.5)
        rng = np.random.default_rng(9)
        o = Tensor(rng.normal(size=(1, 4)))
        C = Tensor(rng.normal(size=(1, 4)))
        f1 = matching.assemble_feature(o, C, cfg, "eval", np.random.default_rng(0))
        f2 = matching.assemble_feature(o, C, cfg, "eval", np.random.default_rng(5))
        assert np.array_equal(f1.data, f2.data)

    def test_concat_ablation(self):
        cfg = ModelConfig(dropout_fused=0.0)
        C = Tensor(np.array([[1.0, 2.0]]))
        M = Tensor(np.array([[3.0]]))
        f = matching.concat_ablation_feature(C, M, cfg)
        assert f.data.tolist() == [[1.0, 2.0, 3.0]]


class TestMatchingGradients:
    def test_full_path_gradcheck(self):
        rng = np.random.default_rng(10)
        h_c, h_m = 4, 5
        params, _ = matching.init_matching_params(h_m, h_c, rng)
        for p in params.values():
            p.data = rng.normal(0, 0.4, size=p.data.shape)
        M = Tensor(rng.normal(size=(2, h_m)), requires_grad=True)
        hidden_vals = [rng.normal(size=(2, h_c)) for _ in range(3)]
        pooled = rng.normal(size=(2, h_c))
        mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
        cfg = ModelConfig(dropout_fused=0.0)
        target = rng.normal(size=(2, 2 * h_c))

        def f():
            ctx = ContextEncoding(
                [Tensor(h) for h in hidden_vals], Tensor(pooled), mask
            )
            feat, _ = matching.match(M, ctx, params, cfg)
            return ad.sum_all(ad.mul(feat, target))

        checked = dict(params)
        checked["M"] = M
        report = ad.finite_diff_check(f, checked, h=1e-5)
        assert report["worst"] < 1e-4

    def test_concat_mode_leaves_matching_params_without_gradient(self):
        rng = np.random.default_rng(11)
        params, _ = matching.init_matching_params(3, 4, rng)
        cfg = ModelConfig(dropout_fused=0.0)
        C = Tensor(rng.normal(size=(1, 4)), requires_grad=True)
        M = Tensor(rng.normal(size=(1, 3)), requires_grad=True)
        for p in params.values():
            p.zero_grad()
        with ad.Tape() as tape:
            f = matching.concat_ablation_feature(C, M, cfg)
            tape.backward(ad.sum_all(f))
        for name, p in params.items():
            assert np.all(p.grad == 0.0), name
        assert np.all(C.grad == 1.0)
