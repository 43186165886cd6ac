"""Core simulator: parameterization, elementary draws, step, trajectories."""

import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

import gravtsir as g
from gravtsir.calibrate import CHAIN_COLUMNS
from gravtsir.model import (ALPHA_DEFAULT, PARAM_NAMES, SEASONAL_BETA,
                            Demographics, DistanceMatrix, EpidemicPanel,
                            EpidemicState, GravityParams, LocalDynamics,
                            gravity_mean, gravity_means,
                            infection_intensity, reparam_from_theta,
                            sample_influx, sample_poisson, seasonal_beta,
                            simulate, step, theta_from_reparam)
from gravtsir.rng import StreamFamily


# ---------------------------------------------------------------------------
# parameterization
# ---------------------------------------------------------------------------

def test_param_names_and_chain_columns():
    assert PARAM_NAMES == ("theta_prime", "tau1", "tau2", "rho")
    assert CHAIN_COLUMNS == PARAM_NAMES + ("delta",)


def test_theta_reparam_hand_values():
    # theta = 10 ** (-5 * theta_prime)
    assert theta_from_reparam(0.0) == 1.0
    assert theta_from_reparam(0.71) == pytest.approx(2.8183829312644537e-4,
                                                     rel=1e-15)
    assert reparam_from_theta(1.0) == 0.0
    assert reparam_from_theta(1e-5) == pytest.approx(1.0, rel=1e-15)


def test_theta_reparam_large_value_underflows_to_exact_zero():
    assert theta_from_reparam(200.0) == 0.0


@given(st.floats(min_value=0.0, max_value=2.0, allow_nan=False))
def test_theta_reparam_round_trip(theta_prime):
    theta = theta_from_reparam(theta_prime)
    assert theta > 0.0
    assert reparam_from_theta(theta) == pytest.approx(theta_prime,
                                                      abs=1e-12)


def test_gravity_params_array_round_trip():
    params = GravityParams.from_array([0.3, 1.0, 0.9, 1.4])
    assert params.theta == theta_from_reparam(0.3)
    assert np.array_equal(params.as_array(), [0.3, 1.0, 0.9, 1.4])


def test_seasonal_profile_shape_and_cycling():
    assert SEASONAL_BETA.shape == (26,)
    assert np.all(SEASONAL_BETA > 0)
    assert SEASONAL_BETA[0] == 1.24 and SEASONAL_BETA[-1] == 1.08
    local = LocalDynamics()
    assert local.alpha == ALPHA_DEFAULT == 0.97
    assert seasonal_beta(local, 1) == SEASONAL_BETA[0]
    assert seasonal_beta(local, 26) == SEASONAL_BETA[25]
    assert seasonal_beta(local, 27) == SEASONAL_BETA[0]
    with pytest.raises(ValueError):
        seasonal_beta(local, 0)


# ---------------------------------------------------------------------------
# container validation
# ---------------------------------------------------------------------------

def test_state_rejects_bad_values():
    with pytest.raises(ValueError):
        EpidemicState(t=1, susceptible=np.array([-1.0]),
                      infected=np.array([0]))
    with pytest.raises(ValueError):
        EpidemicState(t=1, susceptible=np.array([5.0]),
                      infected=np.array([2.5]))
    with pytest.raises(ValueError):
        EpidemicState(t=0, susceptible=np.array([5.0]),
                      infected=np.array([1]))


def test_distance_matrix_validation():
    with pytest.raises(ValueError):
        DistanceMatrix(km=np.array([[0.0, 1.0], [2.0, 0.0]]))  # asymmetric
    with pytest.raises(ValueError):
        DistanceMatrix(km=np.array([[1.0, 2.0], [2.0, 0.0]]))  # diagonal
    with pytest.raises(ValueError):
        DistanceMatrix(km=np.array([[0.0, 0.0], [0.0, 0.0]]))  # zero off-diag


def test_demographics_validation():
    with pytest.raises(ValueError):
        Demographics(city_ids=("a", "a"), population=np.ones(2),
                     births=np.ones(2))
    with pytest.raises(ValueError):
        Demographics(city_ids=("a",), population=np.array([0.0]),
                     births=np.array([1.0]))
    with pytest.raises(ValueError):
        Demographics(city_ids=("a",), population=np.array([10.0]),
                     births=np.array([1.0]), vaccination=np.array([1.5]))


def test_time_varying_demographics_resolve_by_biweek():
    demo = Demographics(city_ids=("a",), population=np.array([[10.0, 20.0]]),
                        births=np.array([1.0]))
    assert demo.at(1)[0] == np.array([10.0])
    assert demo.at(2)[0] == np.array([20.0])
    assert demo.mean_population() == np.array([15.0])
    with pytest.raises(ValueError):
        demo.at(3)


def test_panel_rejects_non_integer_or_negative_cases():
    with pytest.raises(ValueError):
        EpidemicPanel(cases=np.array([[0.5]]), city_ids=("a",),
                      biweeks=np.array([1]))
    with pytest.raises(ValueError):
        EpidemicPanel(cases=np.array([[-1]]), city_ids=("a",),
                      biweeks=np.array([1]))


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def test_gravity_mean_hand_value():
    # theta = 10, populations irrelevant except city 0's (1.0):
    # m_0 = 10 * 1 * (4/2 + 9/3) = 50
    gravity = GravityParams(theta_prime=reparam_from_theta(10.0),
                            tau1=1.0, tau2=1.0, rho=1.0)
    dist = DistanceMatrix(km=np.array([[0.0, 2.0, 3.0],
                                       [2.0, 0.0, 4.0],
                                       [3.0, 4.0, 0.0]]))
    infected = np.array([7, 4, 9])
    population = np.array([1.0, 50.0, 60.0])
    m0 = gravity_mean(0, infected, gravity, population, dist)
    assert m0 == pytest.approx(50.0, rel=1e-12)
    means = gravity_means(infected, gravity, population, dist)
    assert means[0] == pytest.approx(50.0, rel=1e-12)
    # a city's own infecteds never feed back into its mean
    infected2 = infected.copy()
    infected2[0] = 9999
    assert gravity_mean(0, infected2, gravity, population, dist) == m0


def test_gravity_mean_zero_coupling_and_zero_infecteds():
    gravity = GravityParams(theta_prime=200.0, tau1=1.0, tau2=1.0, rho=1.0)
    dist = DistanceMatrix(km=np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert gravity_mean(0, np.array([0, 100]), gravity,
                        np.array([10.0, 10.0]), dist) == 0.0
    gravity2 = GravityParams(theta_prime=0.2, tau1=1.0, tau2=0.0, rho=1.0)
    # zero infecteds export nothing even when tau2 == 0
    assert gravity_mean(0, np.array([5, 0]), gravity2,
                        np.array([10.0, 10.0]), dist) == 0.0


def test_gravity_mean_index_and_distance_errors():
    gravity = GravityParams(0.2, 1.0, 1.0, 1.0)
    dist = DistanceMatrix(km=np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        gravity_mean(2, np.array([1, 1]), gravity, np.ones(2), dist)


def test_influx_zero_mean_is_exact_and_consumes_no_randomness():
    rng = np.random.default_rng(3)
    state_before = rng.bit_generator.state
    assert sample_influx(0.0, rng) == 0.0
    assert rng.bit_generator.state == state_before
    with pytest.raises(ValueError):
        sample_influx(-0.5, rng)


def test_influx_positive_mean_draws_gamma():
    rng = np.random.default_rng(4)
    draws = np.array([sample_influx(3.0, rng) for _ in range(2000)])
    assert np.all(draws > 0.0)
    assert draws.mean() == pytest.approx(3.0, abs=0.15)


def test_infection_intensity_hand_value():
    lam = infection_intensity(beta=1.24, susceptible=5000.0, infectious=10.0,
                              alpha=0.97, population=1e5)
    assert lam == pytest.approx(0.5786176664941341, rel=1e-15)
    # density-dependent variant omits the population divisor
    assert infection_intensity(1.24, 5000.0, 10.0, 0.97) == pytest.approx(
        lam * 1e5, rel=1e-12)


def test_infection_intensity_edge_cases():
    assert infection_intensity(1.0, 0.0, 10.0, 0.97, 100.0) == 0.0
    assert infection_intensity(1.0, 10.0, 0.0, 0.97, 100.0) == 0.0
    with pytest.raises(ValueError):
        infection_intensity(1.0, -1.0, 5.0, 0.97, 100.0)
    with pytest.raises(ValueError):
        infection_intensity(1.0, 5.0, 5.0, 0.97, 0.0)


def test_poisson_sampler_zero_and_errors():
    rng = np.random.default_rng(5)
    assert sample_poisson(0.0, rng) == 0
    with pytest.raises(ValueError):
        sample_poisson(-1.0, rng)
    with pytest.raises(ValueError):
        sample_poisson(float("nan"), rng)
    with pytest.raises(ValueError):
        sample_poisson(float("inf"), rng)


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------

def _one_city(susceptible, infected, births, population=1000.0,
              vaccination=None):
    state = EpidemicState(t=1, susceptible=np.array([float(susceptible)]),
                          infected=np.array([int(infected)]))
    demo = Demographics(city_ids=("a",), population=np.array([population]),
                        births=np.array([float(births)]),
                        vaccination=None if vaccination is None
                        else np.array([float(vaccination)]))
    dist = DistanceMatrix(km=np.zeros((1, 1)))
    return state, demo, dist


def test_step_no_infection_accumulates_births():
    state, demo, dist = _one_city(100.0, 0, 7.0)
    gravity = GravityParams(0.5, 1.0, 1.0, 1.0)
    new, truncated = step(state, gravity, LocalDynamics(), demo, dist,
                          StreamFamily(1))
    assert new.t == 2
    assert new.infected[0] == 0
    assert new.susceptible[0] == 107.0
    assert truncated == 0


def test_step_full_vaccination_blocks_recruitment():
    state, demo, dist = _one_city(100.0, 0, 7.0, vaccination=1.0)
    gravity = GravityParams(0.5, 1.0, 1.0, 1.0)
    new, _ = step(state, gravity, LocalDynamics(), demo, dist,
                  StreamFamily(1))
    assert new.susceptible[0] == 100.0


def test_step_truncates_draw_to_available_susceptibles():
    # lam ~ 50 * 1 * 50**0.97 / 100 >> S + B = 6, so the draw is cut to 6
    state, demo, dist = _one_city(1.0, 50, 5.0, population=100.0)
    gravity = GravityParams(theta_prime=200.0, tau1=1.0, tau2=1.0, rho=1.0)
    local = LocalDynamics(beta=np.full(26, 50.0), alpha=0.97)
    new, truncated = step(state, gravity, local, demo, dist, StreamFamily(77))
    assert new.infected[0] == 6
    assert new.susceptible[0] == 0.0
    assert truncated == 1


def test_step_dimension_mismatch_is_an_error():
    state, demo, dist = _one_city(10.0, 1, 1.0)
    demo2 = Demographics(city_ids=("a", "b"), population=np.ones(2),
                         births=np.ones(2))
    with pytest.raises(ValueError):
        step(state, GravityParams(0.5, 1, 1, 1), LocalDynamics(), demo2,
             dist, StreamFamily(1))


def test_step_replays_bitwise_with_same_streams():
    rng = np.random.default_rng(6)
    k = 3
    state = EpidemicState(t=1, susceptible=rng.uniform(100, 500, k),
                          infected=rng.integers(0, 20, k))
    demo = Demographics(city_ids=tuple("abc"),
                        population=np.full(k, 1000.0),
                        births=np.full(k, 5.0))
    km = np.array([[0.0, 3.0, 4.0], [3.0, 0.0, 5.0], [4.0, 5.0, 0.0]])
    dist = DistanceMatrix(km=km)
    gravity = GravityParams(0.3, 1.0, 1.0, 1.0)
    runs = []
    for _ in range(2):
        current = state
        fam = StreamFamily(42)
        for _ in range(2):
            current, _ = step(current, gravity, LocalDynamics(), demo, dist,
                              fam)
        runs.append(current)
    assert np.array_equal(runs[0].infected, runs[1].infected)
    assert np.array_equal(runs[0].susceptible, runs[1].susceptible)


@hyp_settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1),
       st.floats(min_value=0.0, max_value=2.0),
       st.floats(min_value=0.0, max_value=2.0))
def test_step_never_produces_negative_susceptibles(seed, theta_prime, rho):
    rng = np.random.default_rng(seed)
    k = 3
    state = EpidemicState(t=1, susceptible=rng.uniform(0, 50, k),
                          infected=rng.integers(0, 30, k))
    demo = Demographics(city_ids=tuple("abc"),
                        population=rng.uniform(50, 200, k),
                        births=rng.uniform(0, 10, k))
    km = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])
    gravity = GravityParams(theta_prime, 1.0, 1.0, rho)
    local = LocalDynamics(beta=np.full(26, 8.0), alpha=0.97)
    current = state
    fam = StreamFamily(seed)
    for _ in range(4):
        current, _ = step(current, gravity, local, demo,
                          DistanceMatrix(km=km), fam)
        assert np.all(current.susceptible >= 0.0)
        assert np.all(current.infected >= 0)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _toy_settings(k=5, horizon=30, seed_state=None):
    # near-critical local dynamics (beta * S / N ~ 1) and weak coupling, so
    # trajectories stay alive, stochastic, and far from the truncation bound
    rng = np.random.default_rng(8 if seed_state is None else seed_state)
    pop = rng.uniform(5e4, 2e5, k)
    ids = tuple(f"t{i}" for i in range(k))
    demo = Demographics(city_ids=ids, population=pop, births=0.02 * pop / 26)
    xy = rng.uniform(0, 100, (k, 2))
    km = np.sqrt(((xy[:, None] - xy[None]) ** 2).sum(-1))
    initial = EpidemicState(t=1, susceptible=0.9 * pop,
                            infected=rng.integers(5, 40, k))
    return g.SimulationSettings(initial=initial, local=LocalDynamics(),
                                demo=demo, dist=DistanceMatrix(km=km),
                                horizon=horizon)


def test_simulate_first_column_is_the_initial_state():
    settings = _toy_settings()
    panel = settings.run(GravityParams(1.2, 1, 1, 1), seed=11)
    assert panel.cases.shape == (5, 30)
    assert np.array_equal(panel.cases[:, 0], settings.initial.infected)
    assert np.array_equal(panel.biweeks, np.arange(1, 31))


def test_simulate_same_seed_is_bit_identical():
    settings = _toy_settings()
    gravity = GravityParams(1.2, 1.0, 1.0, 1.2)
    a = settings.run(gravity, seed=99)
    b = settings.run(gravity, seed=99)
    assert np.array_equal(a.cases, b.cases)
    assert a.truncations == b.truncations
    c = settings.run(gravity, seed=100)
    assert not np.array_equal(a.cases, c.cases)


def test_simulate_explicit_default_stream_ids_change_nothing():
    settings = _toy_settings()
    gravity = GravityParams(1.2, 1.0, 1.0, 1.2)
    a = simulate(settings.initial, gravity, settings.local, settings.demo,
                 settings.dist, settings.horizon, seed=7)
    b = simulate(settings.initial, gravity, settings.local, settings.demo,
                 settings.dist, settings.horizon, seed=7,
                 stream_ids=list(range(5)))
    assert np.array_equal(a.cases, b.cases)


def test_simulate_uncoupled_unseeded_cities_stay_silent():
    # theta == 0 exactly: only the seeded city can ever produce cases
    rng = np.random.default_rng(10)
    k = 5
    pop = np.full(k, 1e5)
    demo = Demographics(city_ids=tuple(f"u{i}" for i in range(k)),
                        population=pop, births=np.full(k, 60.0))
    km = np.abs(np.subtract.outer(np.arange(k), np.arange(k))).astype(float)
    infected = np.zeros(k, dtype=int)
    infected[2] = 25
    initial = EpidemicState(t=1, susceptible=0.06 * pop, infected=infected)
    panel = simulate(initial, GravityParams(200.0, 1, 1, 1), LocalDynamics(),
                     demo, DistanceMatrix(km=km), horizon=40, seed=13)
    unseeded = [0, 1, 3, 4]
    assert np.all(panel.cases[unseeded] == 0)
    assert panel.cases[2].sum() > 25


def test_simulate_horizon_validation():
    settings = _toy_settings()
    with pytest.raises(ValueError):
        simulate(settings.initial, GravityParams(0.5, 1, 1, 1),
                 settings.local, settings.demo, settings.dist, horizon=0,
                 seed=1)
