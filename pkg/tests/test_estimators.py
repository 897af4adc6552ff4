import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dynsbm.estimators import AposterioriEKF, AprioriEKF, BlendedLinkPredictor, EWMALinkPredictor, SpectralSSBM
from dynsbm.exceptions import DimensionError
from dynsbm.metrics import adjusted_rand
from dynsbm.simgen import SimParams, generate


@pytest.fixture(scope="module")
def sim():
    snaps, truth = generate(SimParams(seed=11, directed=True, T=5))
    X = np.stack([s.adjacency() for s in snaps])
    labels = np.stack([a.labels for a in truth.assignments])
    return snaps, truth, X, labels


@pytest.mark.parametrize(
    "est",
    [AprioriEKF(s_diag=0.02), AposterioriEKF(n_classes=3), SpectralSSBM(n_classes=5),
     EWMALinkPredictor(lam=0.3), BlendedLinkPredictor(w_block=0.2)],
)
def test_params_round_trip(est):
    params = est.get_params()
    twin = clone(est)
    assert twin.get_params() == params
    twin.set_params(**params)
    assert twin.get_params() == params


def test_apriori_accepts_array_and_snapshots(sim):
    snaps, truth, X, labels = sim
    a = AprioriEKF().fit(X, labels)
    b = AprioriEKF().fit(snaps, truth.assignments)
    assert np.allclose(a.theta_, b.theta_)
    assert a.theta_.shape == (5, 4, 4)
    assert a.transform().shape == (5, 16)
    assert a.predict().shape == (4, 4)


def test_apriori_accepts_sparse_list(sim):
    snaps, truth, X, labels = sim
    a = AprioriEKF().fit([sp.csr_matrix(W) for W in X], labels)
    assert np.allclose(a.theta_, AprioriEKF().fit(X, labels).theta_)


def test_apriori_fixed_memberships(sim):
    snaps, truth, X, labels = sim
    a = AprioriEKF().fit(X, labels[0])
    assert len(a.states_) == 5


def test_apriori_rejects_mismatched_memberships(sim):
    _, _, X, labels = sim
    with pytest.raises(DimensionError):
        AprioriEKF().fit(X, labels[:3])


def test_not_fitted():
    with pytest.raises(NotFittedError):
        AprioriEKF().predict()


def test_aposteriori_fit_predict(sim):
    _, truth, X, labels = sim
    model = AposterioriEKF(n_classes=4, random_state=0)
    out = model.fit_predict(X)
    assert out.shape == labels.shape
    assert np.mean([adjusted_rand(a, b) for a, b in zip(out, labels)]) > 0.7
    assert model.scores_.shape == (5,)


def test_spectral_ssbm(sim):
    _, _, X, _ = sim
    model = SpectralSSBM(n_classes=4, random_state=0).fit(X)
    assert model.labels_.shape == (5, 128)
    assert np.all((model.theta_ > 0) & (model.theta_ < 1))


def test_link_predictors(sim):
    snaps, truth, X, labels = sim
    ewma = EWMALinkPredictor(lam=0.5).fit(X[:4])
    blend = BlendedLinkPredictor(lam=0.5, w_block=1.0).fit(X[:4], labels[:4])
    assert np.array_equal(EWMALinkPredictor(lam=0.0).fit(X[:4]).predict(), X[3])
    assert blend.score(X[4:]) > ewma.score(X[4:])
    unsup = BlendedLinkPredictor(n_classes=4, w_block=0.5, random_state=0).fit(X[:4])
    assert 0.5 < unsup.score(X[4:]) <= 1
