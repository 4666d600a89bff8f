import numpy as np
import pytest

from xanchor.align_supervised import LinearMap, random_orthogonal
from xanchor.align_unsupervised import (
    AdvConfig,
    orthogonalize_step,
    refine_procrustes,
    train_adversarial,
    unsupervised_criterion,
)
from xanchor.embed_io import AnchorTable
from xanchor.errors import TrainingDivergedError

from oracles import csls_table


def ranked_table(rng, n, d, prefix, vectors=None):
    """Anchor table with strictly descending counts so row order = frequency."""
    if vectors is None:
        vectors = rng.normal(size=(n, d))
    counts = np.arange(n, 0, -1)
    return AnchorTable(d, [f"{prefix}{i}" for i in range(n)], vectors, counts)


def rotated_pair(seed, n, d, anisotropy=1.0):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(n, d))
    if anisotropy > 1.0:
        vecs = vecs * np.geomspace(1.0, anisotropy, d)[None, :]
    r = random_orthogonal(d, rng)
    src = ranked_table(rng, n, d, "s", vecs)
    tgt = ranked_table(rng, n, d, "t", vecs @ r.T)
    return src, tgt, r


def plane_rotation(d, theta):
    g = np.eye(d)
    g[0, 0] = g[1, 1] = np.cos(theta)
    g[0, 1] = -np.sin(theta)
    g[1, 0] = np.sin(theta)
    return g


class TestOrthogonalizeStep:
    def test_orthogonal_matrices_are_fixed_points(self):
        rng = np.random.default_rng(0)
        for d in (2, 5, 16):
            w = random_orthogonal(d, rng)
            w2 = orthogonalize_step(w, 0.01)
            assert w2.shape == w.shape
            assert np.abs(w2 - w).max() <= 1e-12

    def test_repeated_application_stays_put(self):
        w = random_orthogonal(6, np.random.default_rng(1))
        cur = w
        for _ in range(50):
            cur = orthogonalize_step(cur, 0.05)
        assert np.abs(cur - w).max() <= 1e-10

    def test_inflated_identity_contracts_to_orthogonal(self):
        w = 1.1 * np.eye(8)
        defects = []
        for _ in range(700):
            w = orthogonalize_step(w, 0.01)
            defects.append(float(np.linalg.norm(w.T @ w - np.eye(8), "fro")))
        assert defects[199] > 1e-6
        assert defects[-1] < 1e-6
        assert all(b <= a for a, b in zip(defects, defects[1:]))

    def test_singular_values_move_strictly_toward_one(self):
        w = np.diag([0.5, 1.5])
        s = np.linalg.svd(orthogonalize_step(w, 0.05), compute_uv=False)
        hi, lo = s[0], s[1]
        assert 1.0 < hi < 1.5
        assert 0.5 < lo < 1.0

    def test_finiteness_preserved(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=(4, 4))
        assert np.isfinite(orthogonalize_step(w, 0.1)).all()


class TestCriterion:
    def test_matches_exhaustive_csls_oracle(self):
        rng = np.random.default_rng(3)
        s = rng.normal(size=(50, 8))
        r = random_orthogonal(8, rng)
        t = s @ r.T
        got = unsupervised_criterion(r, s, t, knn=10, n_words=50)
        mapped = s @ r.T
        want = float(np.mean(csls_table(mapped, t, mapped, 10).max(axis=1)))
        assert got == pytest.approx(want, abs=1e-12)

    def test_planted_map_beats_random_map(self):
        rng = np.random.default_rng(4)
        s = rng.normal(size=(80, 8))
        r = random_orthogonal(8, rng)
        t = s @ r.T
        planted = unsupervised_criterion(r, s, t, 10, 80)
        rand = unsupervised_criterion(random_orthogonal(8, rng), s, t, 10, 80)
        assert planted > rand

    def test_zero_map_is_finite(self):
        rng = np.random.default_rng(5)
        s = rng.normal(size=(30, 6))
        got = unsupervised_criterion(np.zeros((6, 6)), s, rng.normal(size=(30, 6)))
        assert np.isfinite(got)

    def test_accepts_linear_map_wrapper(self):
        rng = np.random.default_rng(6)
        s = rng.normal(size=(20, 4))
        t = rng.normal(size=(20, 4))
        w = random_orthogonal(4, rng)
        a = unsupervised_criterion(w, s, t)
        b = unsupervised_criterion(LinearMap(4, w, orthogonal=True), s, t)
        assert a == b


class TestTrainAdversarial:
    def tiny_cfg(self, seed, **overrides):
        base = dict(
            seed=seed,
            epochs=2,
            batches_per_epoch=60,
            batch_size=16,
            disc_hidden=32,
            top_k_vocab=100,
        )
        base.update(overrides)
        return AdvConfig(**base)

    def test_same_seed_bitwise_identical(self):
        rng = np.random.default_rng(7)
        src = ranked_table(rng, 120, 6, "s")
        tgt = ranked_table(rng, 120, 6, "t")
        lm1, rep1 = train_adversarial(src, tgt, self.tiny_cfg(11))
        lm2, rep2 = train_adversarial(src, tgt, self.tiny_cfg(11))
        assert np.array_equal(lm1.matrix, lm2.matrix)
        assert rep1.to_json() == rep2.to_json()

    def test_different_seed_differs(self):
        rng = np.random.default_rng(8)
        src = ranked_table(rng, 120, 6, "s")
        tgt = ranked_table(rng, 120, 6, "t")
        lm1, _ = train_adversarial(src, tgt, self.tiny_cfg(1))
        lm2, _ = train_adversarial(src, tgt, self.tiny_cfg(2))
        assert not np.array_equal(lm1.matrix, lm2.matrix)

    def test_dim_mismatch_rejected(self):
        rng = np.random.default_rng(9)
        src = ranked_table(rng, 50, 4, "s")
        tgt = ranked_table(rng, 50, 5, "t")
        with pytest.raises(TrainingDivergedError, match="dims differ"):
            train_adversarial(src, tgt, self.tiny_cfg(0))

    def test_exploding_learning_rate_diverges_with_epoch(self):
        rng = np.random.default_rng(10)
        src = ranked_table(rng, 100, 4, "s")
        tgt = ranked_table(rng, 100, 4, "t")
        with pytest.raises(TrainingDivergedError) as err:
            train_adversarial(src, tgt, self.tiny_cfg(0, lr_map=1e12))
        assert err.value.epoch == 0
        assert "epoch 0" in str(err.value)

    def test_small_tables_warn_and_use_all_rows(self):
        rng = np.random.default_rng(11)
        src = ranked_table(rng, 40, 4, "s")
        tgt = ranked_table(rng, 40, 4, "t")
        with pytest.warns(UserWarning, match="top_k_vocab"):
            _, rep = train_adversarial(src, tgt, self.tiny_cfg(0, top_k_vocab=500))
        assert len(rep.epochs) == 2

    def test_report_selection_bookkeeping(self):
        rng = np.random.default_rng(12)
        src = ranked_table(rng, 120, 5, "s")
        tgt = ranked_table(rng, 120, 5, "t")
        lm, rep = train_adversarial(src, tgt, self.tiny_cfg(3, epochs=4, lr_map=0.01))
        crits = [e.criterion for e in rep.epochs]
        assert rep.best_criterion == max(crits)
        assert rep.best_epoch == int(np.argmax(crits))
        assert rep.converged == (rep.best_criterion >= rep.convergence_threshold)
        assert rep.orthogonality_defect == pytest.approx(lm.orthogonality_defect())
        assert rep.orthogonality_defect <= 0.01 * 5
        assert lm.dim == 5

    def test_indistinguishable_spaces_leave_discriminator_guessing(self):
        rng = np.random.default_rng(13)
        vecs = rng.normal(size=(150, 8))
        counts = np.arange(150, 0, -1)
        src = AnchorTable(8, [f"s{i}" for i in range(150)], vecs, counts)
        tgt = AnchorTable(8, [f"t{i}" for i in range(150)], vecs.copy(), counts)
        for seed in range(3):
            cfg = AdvConfig(
                seed=seed,
                epochs=3,
                batches_per_epoch=300,
                batch_size=32,
                disc_hidden=64,
                lr_map=0.0,
                top_k_vocab=150,
            )
            lm, rep = train_adversarial(src, tgt, cfg)
            assert np.array_equal(lm.matrix, np.eye(8))
            assert 0.4 <= rep.epochs[-1].disc_accuracy <= 0.6

    def test_unrelated_tables_do_not_converge(self):
        for seed in range(2):
            rng = np.random.default_rng(100 + seed)
            src = ranked_table(rng, 400, 16, "s")
            tgt = ranked_table(rng, 400, 16, "t")
            cfg = AdvConfig(
                seed=seed,
                epochs=2,
                batches_per_epoch=300,
                batch_size=32,
                disc_hidden=64,
                lr_disc=0.1,
                lr_map=0.05,
                top_k_vocab=400,
            )
            _, rep = train_adversarial(src, tgt, cfg)
            assert not rep.converged
            assert rep.best_criterion < rep.convergence_threshold


class TestPlantedRotationRecovery:
    def test_training_breaks_out_and_recovers_gold(self):
        """End-to-end trainer check on its own: anisotropically scaled rows
        (the shape our generator produces) make the planted rotation
        identifiable; training must find it without any dictionary."""
        from xanchor.retrieval_eval import GoldLexicon, evaluate

        src, tgt, _ = rotated_pair(0, n=2000, d=16, anisotropy=4.0)
        cfg = AdvConfig(
            seed=0,
            epochs=20,
            batches_per_epoch=2000,
            batch_size=32,
            disc_hidden=128,
            lr_disc=0.3,
            lr_map=0.3,
            top_k_vocab=400,
        )
        lm, rep = train_adversarial(src, tgt, cfg)
        assert rep.converged
        gold = GoldLexicon({f"s{i}": {f"t{i}"} for i in range(len(src))})
        report = evaluate(lm, src, tgt, gold, "csls_knn_10")
        assert report.precision_at[1] >= 90.0


class TestRefine:
    def make_planted(self, seed, n=300, d=8):
        rng = np.random.default_rng(seed)
        vecs = rng.normal(size=(n, d))
        r = random_orthogonal(d, rng)
        src = ranked_table(rng, n, d, "s", vecs)
        tgt = ranked_table(rng, n, d, "t", vecs @ r.T)
        return src, tgt, r, vecs

    def test_zero_rounds_is_identity(self):
        src, tgt, r, _ = self.make_planted(14)
        lm = LinearMap(8, r, orthogonal=True)
        assert refine_procrustes(lm, src, tgt, rounds=0, n_top=300) is lm

    def test_optimal_map_is_a_fixed_point(self):
        src, tgt, r, _ = self.make_planted(15)
        lm = LinearMap(8, r, orthogonal=True)
        out = refine_procrustes(lm, src, tgt, rounds=2, n_top=300)
        assert np.abs(out.matrix - r).max() <= 1e-6

    def test_one_round_improves_perturbed_map(self):
        src, tgt, r, vecs = self.make_planted(16)
        pert = LinearMap(8, r @ plane_rotation(8, 0.1), orthogonal=True)
        before = unsupervised_criterion(pert, vecs, vecs @ r.T, 10, 300)
        out = refine_procrustes(pert, src, tgt, rounds=1, n_top=300)
        after = unsupervised_criterion(out, vecs, vecs @ r.T, 10, 300)
        assert after > before
        assert np.abs(out.matrix - r).max() < np.abs(pert.matrix - r).max()

    def test_never_returns_worse_map_by_criterion(self):
        rng = np.random.default_rng(17)
        src = ranked_table(rng, 200, 6, "s")
        tgt = ranked_table(rng, 200, 6, "t")
        lm = LinearMap(6, random_orthogonal(6, rng), orthogonal=True)
        before = unsupervised_criterion(lm, src.vectors, tgt.vectors, 10, 200)
        out = refine_procrustes(lm, src, tgt, rounds=3, n_top=200)
        after = unsupervised_criterion(out, src.vectors, tgt.vectors, 10, 200)
        assert after >= before
