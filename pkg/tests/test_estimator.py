import numpy as np
import pytest

from priofd.controller import control
from priofd.dynamics import AgentModel, TrueState, step_agent
from priofd.estimator import (RemoteEstimate, compute_error,
                              propagate_estimate)


class TestComputeError:
    def test_zero_when_equal(self):
        est = RemoteEstimate(1, [1.0, 2.0], 5)
        err = compute_error(TrueState([1.0, 2.0], 5), est)
        assert np.array_equal(err.e, [0.0, 0.0])

    def test_componentwise(self):
        err = compute_error(TrueState([1.0, 2.0], 0), RemoteEstimate(1, [0.0, 2.0], 0))
        assert np.array_equal(err.e, [1.0, 0.0])

    def test_timestep_mismatch_aborts(self):
        with pytest.raises(AssertionError):
            compute_error(TrueState([1.0], 3), RemoteEstimate(1, [1.0], 4))


def coupled_pair():
    a = np.array([[1.0, 0.1], [0.0, 0.9]])
    b = np.array([[0.0], [0.2]])
    f_self = np.array([[-0.4, -1.1]])
    f_cross = np.array([[0.05, 0.02]])
    m1 = AgentModel(1, a, b, f_self, {2: f_cross}, 1e-3 * np.eye(2))
    m2 = AgentModel(2, a, b, f_self, {1: f_cross}, 1e-3 * np.eye(2))
    return m1, m2


class TestPropagateEstimate:
    def test_fresh_measurement_zero_noise_resets_error(self):
        m1, _ = coupled_pair()
        x = TrueState([0.3, -0.2], 0)
        others = {2: RemoteEstimate(2, [0.1, 0.4], 0)}
        est = RemoteEstimate(1, [9.0, 9.0], 0)  # stale, should be discarded
        u = control(m1, x, others)
        x_next = step_agent(m1, x, u.u, np.zeros(2))
        est_next = propagate_estimate(m1, est, others, received=x.x)
        err = compute_error(x_next, est_next)
        assert np.array_equal(err.e, np.zeros(2))

    def test_extrapolation_exact_under_zero_noise(self):
        m1, _ = coupled_pair()
        x = TrueState([0.3, -0.2], 0)
        est = RemoteEstimate(1, x.x.copy(), 0)  # e(k) = 0
        others = {2: RemoteEstimate(2, [0.1, 0.4], 0)}
        for _ in range(4):
            u = control(m1, TrueState(x.x, x.k), others)
            x = step_agent(m1, x, u.u, np.zeros(2))
            est = propagate_estimate(m1, est, others, received=None)
            others = {2: RemoteEstimate(2, others[2].x_hat, est.k)}
            assert np.array_equal(compute_error(TrueState(x.x, est.k), est).e,
                                  np.zeros(2))

    def test_identity_dynamics_keeps_error(self):
        # A=I, B=0: the closed-loop difference of the extrapolation fixes e
        model = AgentModel(1, np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)))
        est = RemoteEstimate(1, [0.0, 0.0], 0)
        x = TrueState([1.0, 0.0], 0)  # e(k) = (1, 0)
        est_next = propagate_estimate(model, est, {}, received=None)
        x_next = step_agent(model, x, np.zeros(1), np.zeros(2))
        err = compute_error(x_next, est_next)
        assert np.array_equal(err.e, [1.0, 0.0])

    def test_received_round_error_equals_noise(self):
        # e(k+1) = v(k) after a communicated round, by substituting the
        # update rule into the plant step
        m1, _ = coupled_pair()
        x = TrueState([0.5, 0.1], 0)
        others = {2: RemoteEstimate(2, [-0.2, 0.3], 0)}
        v = np.array([0.013, -0.007])
        u = control(m1, x, others)
        x_next = step_agent(m1, x, u.u, v)
        est_next = propagate_estimate(m1, RemoteEstimate(1, [1.0, 1.0], 0),
                                      others, received=x.x)
        err = compute_error(x_next, est_next)
        assert np.allclose(err.e, v, rtol=0, atol=1e-15)


class TestEngineErrorProperties:
    def test_reset_to_injected_noise_bit_exact(self, fault_free_traces):
        for trace in fault_free_traces[:5]:
            gam, err, noise = trace.gamma, trace.errors, trace.noise
            ks, agents = np.nonzero(gam[:-1])
            assert ks.size > 0
            for k, i in zip(ks, agents):
                assert np.array_equal(err[k + 1, i], noise[k, i])

    def test_monotone_information(self, fault_free_traces):
        """Mean ||e||^2 right after a send is smaller than after five
        silent rounds."""
        after_send = []
        after_silence = []
        for trace in fault_free_traces:
            gam = trace.gamma
            for i in range(gam.shape[1]):
                col = gam[:, i]
                for k in range(55, trace.rounds):
                    if col[k - 1]:
                        after_send.append(trace.err_sq[k, i])
                    if not col[k - 5:k].any():
                        after_silence.append(trace.err_sq[k, i])
        assert len(after_send) > 100 and len(after_silence) > 100
        assert np.mean(after_send) < np.mean(after_silence)

    def test_estimates_shared_single_copy(self, desk_cfg, desk_models):
        # zero noise, zero start: estimates and states stay at equilibrium,
        # which only holds if every agent consumes the same shared estimate
        from priofd.network import WorldState, run_round
        quiet = [AgentModel(m.id, m.A, m.B, m.F_self, m.F_cross,
                            np.zeros((4, 4)), m.priority_weight)
                 for m in desk_models]
        world = WorldState(quiet, desk_cfg.bandwidth, desk_cfg.quant_scale,
                           20, seed=0, run=0)
        for _ in range(20):
            run_round(world)
        assert np.array_equal(world.Xhat, np.zeros_like(world.Xhat))
        assert np.array_equal(world.E, np.zeros_like(world.E))
