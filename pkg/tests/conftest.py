import numpy as np
import pytest

from mpckit.model import LtiModel, Polytope, pendulum_model


@pytest.fixture
def lti_demo_model():
    # the two-state system used throughout the closed-loop tests
    return LtiModel([[0.9, 0.2], [-0.4, 0.8]], [[0.1], [0.01]])


@pytest.fixture
def lti_demo_sets():
    Fx = np.vstack([np.eye(2), -np.eye(2)])
    gx = np.full(4, 10.0)
    Fu = np.array([[1.0], [-1.0]])
    gu = np.array([1.0, 1.0])
    return Polytope(Fx, gx), Polytope(Fu, gu)


@pytest.fixture
def pendulum():
    return pendulum_model()


@pytest.fixture
def pendulum_sets():
    Fx = np.vstack([np.eye(2), -np.eye(2)])
    gx = np.full(4, 5.0)
    Fu = np.array([[1.0], [-1.0]])
    gu = np.array([0.1, 0.0])
    return Polytope(Fx, gx), Polytope(Fu, gu)
