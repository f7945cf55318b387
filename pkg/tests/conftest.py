import numpy as np
import pytest

import specwave as sw


@pytest.fixture
def model8():
    return sw.build_model(1.0, 8)


@pytest.fixture
def grid32():
    return sw.GridWorkspace(32)


def small_anderson_config(n_ref=32, levels=(4, 8, 16), n_steps=64, m_noise=64):
    model = sw.build_model(1.0, n_ref)
    pos = np.zeros(n_ref)
    pos[0] = 1.0
    return sw.SimConfig(model=model, levels=levels, t_final=1.0, n_steps=n_steps,
                        m_noise=m_noise, spec=sw.preset("anderson"),
                        initial=sw.PairState(pos, np.zeros(n_ref)),
                        grid_points=n_ref + m_noise)


def zero_config(n_ref=8, levels=(2, 4, 6), initial_pos=None, initial_vel=None):
    model = sw.build_model(1.0, n_ref)
    pos = np.zeros(n_ref) if initial_pos is None else np.asarray(initial_pos, float)
    vel = np.zeros(n_ref) if initial_vel is None else np.asarray(initial_vel, float)
    return sw.SimConfig(model=model, levels=levels, t_final=1.0, n_steps=32,
                        m_noise=8, spec=sw.preset("zero"),
                        initial=sw.PairState(pos, vel))
