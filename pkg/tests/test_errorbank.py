import numpy as np
import pytest

from lpvmpc.errorbank import ErrorBank, InsufficientHistory
from lpvmpc import gp as gplib

N = 4
NX = 2


def sentinel_column(k):
    """e_{i|k}^{(n)} encoded as 1000k + 10i + n for unambiguous pairing checks."""
    col = np.zeros((N + 1, NX))
    for i in range(1, N + 2):
        for n in range(NX):
            col[i - 1, n] = 1000.0 * k + 10.0 * i + n
    return col


def record_sentinels(bank, ks):
    for k in ks:
        truth = sentinel_column(k)
        bank.record_errors(k, truth, np.zeros_like(truth))


def test_record_requires_matching_shapes():
    bank = ErrorBank(N=N, n_x=NX)
    with pytest.raises(ValueError):
        bank.record_errors(0, np.zeros((N, NX)), np.zeros((N, NX)))


def test_equal_sequences_record_zero_column():
    bank = ErrorBank(N=N, n_x=NX)
    x = np.random.default_rng(0).normal(size=(N + 1, NX))
    bank.record_errors(0, x, x)
    assert np.array_equal(bank.columns[0], np.zeros((N + 1, NX)))


def test_zero_initial_error_row_never_stored():
    # Columns carry horizon rows 1..N+1 only; i = 0 is identically zero.
    bank = ErrorBank(N=N, n_x=NX)
    record_sentinels(bank, [0])
    assert bank.columns[0].shape == (N + 1, NX)


def test_two_columns_give_one_pair_per_gp():
    bank = ErrorBank(N=N, n_x=NX)
    record_sentinels(bank, [1, 2])
    # One pair per horizon row and component: N pairs per state component.
    for i in range(1, N + 1):
        for n in range(NX):
            X, Y = bank.build_training(i, n)
            assert X.shape == (1,) and Y.shape == (1,)
            # input e_{i+1|1}, target e_{i|2}: consecutive-column pairing
            assert X[0] == 1000.0 * 1 + 10.0 * (i + 1) + n
            assert Y[0] == 1000.0 * 2 + 10.0 * i + n


def test_pairs_span_consecutive_columns():
    bank = ErrorBank(N=N, n_x=NX, window=50)
    record_sentinels(bank, range(5))
    X, Y = bank.build_training(2, 1)
    assert len(X) == 4
    for j in range(4):
        assert X[j] == 1000.0 * j + 10.0 * 3 + 1          # e_{3|j}
        assert Y[j] == 1000.0 * (j + 1) + 10.0 * 2 + 1    # e_{2|j+1}


def test_window_caps_pair_count():
    bank = ErrorBank(N=N, n_x=NX, window=2)
    record_sentinels(bank, range(10))
    X, Y = bank.build_training(1, 0)
    assert len(X) == 1


def test_full_history_pair_count():
    bank = ErrorBank(N=N, n_x=NX, window=100)
    record_sentinels(bank, range(7))
    X, _ = bank.build_training(1, 0)
    assert len(X) == 6  # m recorded columns give m-1 pairs


def test_default_window_is_twice_horizon():
    assert ErrorBank(N=N, n_x=NX).window == 2 * N


def test_insufficient_history_raises():
    bank = ErrorBank(N=N, n_x=NX)
    record_sentinels(bank, [0])
    with pytest.raises(InsufficientHistory):
        bank.build_training(1, 0)


def test_non_consecutive_columns_rejected():
    bank = ErrorBank(N=N, n_x=NX)
    record_sentinels(bank, [0, 2])
    with pytest.raises(AssertionError):
        bank.build_training(1, 0)


def test_predict_before_data_is_zero():
    bank = ErrorBank(N=N, n_x=NX)
    pred = bank.predict_errors(0)
    assert np.array_equal(pred.mean, np.zeros((N, NX)))
    assert np.array_equal(pred.std, np.zeros((N, NX)))
    assert not pred.fitted.any()


def test_all_zero_history_predicts_zero_mean():
    bank = ErrorBank(N=N, n_x=NX, seed=0)
    for k in range(4):
        bank.record_errors(k, np.zeros((N + 1, NX)), np.zeros((N + 1, NX)))
    pred = bank.predict_errors(4)
    assert np.allclose(pred.mean, 0.0, atol=1e-12)
    assert pred.fitted.all()


def test_worked_example_prediction_mechanism():
    """Columns at steps {1, 2}: GP_1 trains on the single pair
    (e_{2|1}, e_{1|2}) and, queried at e_{2|2}, predicts e_{1|3}."""
    bank = ErrorBank(N=N, n_x=1, seed=3)
    c1 = np.zeros((N + 1, 1))
    c2 = np.zeros((N + 1, 1))
    c1[1, 0] = 0.8    # e_{2|1}
    c2[0, 0] = 0.7    # e_{1|2}
    c2[1, 0] = 0.75   # e_{2|2}, the query
    bank.record_errors(1, c1, np.zeros_like(c1))
    bank.record_errors(2, c2, np.zeros_like(c2))
    X, Y = bank.build_training(1, 0)
    assert X.tolist() == [0.8] and Y.tolist() == [0.7]
    pred = bank.predict_errors(3)
    ref = gplib.fit(X, Y, seed=3)
    assert pred.mean[0, 0] == gplib.predict(ref, 0.75).mean
    assert pred.fitted[0, 0]


def test_bank_size_is_horizon_by_state():
    bank = ErrorBank(N=N, n_x=NX, seed=0)
    for k in range(3):
        c = np.full((N + 1, NX), 0.1 * (k + 1))
        bank.record_errors(k, c, np.zeros_like(c))
    bank.predict_errors(3)
    assert len(bank.gps) == N
    assert all(len(row) == NX for row in bank.gps)
    assert all(g is not None for row in bank.gps for g in row)


def test_linear_error_process_oracle():
    """Process e_{i|k} = 0.9^k v_{i+k} satisfies e_{i|k+1} = 0.9 e_{i+1|k};
    after 20 columns the GP bank should recover the linear rule within 5%."""
    bank = ErrorBank(N=N, n_x=1, window=20, seed=0)
    v = lambda j: 1.5 + np.sin(0.3 * j)
    n_cols = 22
    for k in range(n_cols):
        col = np.zeros((N + 1, 1))
        for i in range(1, N + 2):
            col[i - 1, 0] = 0.9 ** k * v(i + k)
        bank.record_errors(k, col, np.zeros_like(col))
    pred = bank.predict_errors(n_cols)
    for i in range(1, N + 1):
        expected = 0.9 ** n_cols * v(i + n_cols)   # e_{i|k} at k = n_cols
        got = pred.mean[i - 1, 0]
        assert abs(got - expected) <= 0.05 * abs(expected), (i, got, expected)


def test_determinism_identical_history_identical_predictions():
    def build():
        bank = ErrorBank(N=N, n_x=NX, seed=5)
        rng = np.random.default_rng(8)
        for k in range(6):
            c = rng.normal(size=(N + 1, NX)) * 0.9 ** k
            bank.record_errors(k, c, np.zeros_like(c))
            bank.predict_errors(k + 1)
        return bank.predict_errors(7)

    a, b = build(), build()
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.std, b.std)


def test_refit_cadence_freezes_hyperparameters_between_refits():
    def run(refit_every):
        bank = ErrorBank(N=N, n_x=1, seed=2, refit_every=refit_every)
        rng = np.random.default_rng(4)
        kernels = []
        for k in range(6):
            c = rng.normal(size=(N + 1, 1)) * 0.8 ** k
            bank.record_errors(k, c, np.zeros_like(c))
            if k >= 1:
                bank.predict_errors(k + 1)
                kernels.append(bank.gps[0][0].kernel)
        return kernels

    kernels = run(refit_every=3)
    # fits happen on predict calls 0 and 3; calls 1-2 recondition only
    assert kernels[1] == kernels[0]
    assert kernels[2] == kernels[0]


def test_export_csv(tmp_path):
    bank = ErrorBank(N=N, n_x=NX)
    record_sentinels(bank, [0, 1])
    out = tmp_path / "bank.csv"
    bank.export_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "k,i,n,error"
    assert len(lines) == 1 + 2 * (N + 1) * NX
