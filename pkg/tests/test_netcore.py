"""Network core: layers, propagation, detection, readout, serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plasmonet.netcore import (
    DiffractionLayer,
    LinearHead,
    Network,
    PhaseLayer,
    cascade_boards,
    class_ports,
    classify,
    classify_by_port_energy,
    detect,
    forward_batch,
    forward_single,
    load_network,
    save_network,
)
from plasmonet.validation import ValidationError

from conftest import random_unitary


def small_net(n=4, seed=7, detectors=(0, 1), slabs=2):
    layers = []
    gen = np.random.default_rng(seed)
    for i in range(slabs):
        layers.append(DiffractionLayer(random_unitary(n, seed + i)))
        layers.append(PhaseLayer(gen.uniform(0, 2 * np.pi, n)))
    return Network(port_count=n, layers=layers, detector_ports=detectors)


# -- layer validation --------------------------------------------------------


def test_diffraction_rejects_non_unitary_synthesized():
    with pytest.raises(ValidationError, match="unitary"):
        DiffractionLayer(np.eye(3) * 2.0)


def test_diffraction_measured_allows_loss_but_not_gain():
    DiffractionLayer(np.eye(3) * 0.5, source="measured")  # lossy is fine
    with pytest.raises(ValidationError, match="spectral norm"):
        DiffractionLayer(np.eye(3) * 1.2, source="measured")


def test_diffraction_rejects_unknown_source():
    with pytest.raises(ValidationError, match="source"):
        DiffractionLayer(np.eye(2), source="magic")


def test_phase_layer_wrap_invariance():
    phi = np.array([0.3, 2.0, 5.9])
    a = PhaseLayer(phi).diagonal()
    b = PhaseLayer(phi + 2 * np.pi).diagonal()
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(np.abs(a), 1.0, atol=1e-15)


def test_phase_layer_amplitude_table():
    table = (np.array([0.0, 2 * np.pi]), np.array([0.5, 1.0]))
    layer = PhaseLayer(np.array([0.0, np.pi]), amplitude_table=table)
    diag = layer.diagonal()
    assert np.isclose(abs(diag[0]), 0.5)
    assert np.isclose(abs(diag[1]), 0.75)  # linear interpolation at pi


def test_phase_layer_rejects_bad_input():
    with pytest.raises(ValidationError):
        PhaseLayer(np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        PhaseLayer(np.array([np.nan]))


def test_linear_head_shape_check():
    with pytest.raises(ValidationError, match="head"):
        LinearHead(np.zeros((3, 4)), np.zeros(2))


# -- network structure -------------------------------------------------------


def test_network_requires_alternation():
    d = DiffractionLayer(np.eye(2))
    p = PhaseLayer(np.zeros(2))
    with pytest.raises(ValidationError, match="alternate"):
        Network(2, [p, d])
    with pytest.raises(ValidationError, match="alternate"):
        Network(2, [d, d])
    with pytest.raises(ValidationError, match="alternate"):
        Network(2, [d, p, p])


def test_network_port_count_mismatch():
    with pytest.raises(ValidationError, match="ports"):
        Network(3, [DiffractionLayer(np.eye(2))])


def test_network_detector_port_validation():
    d = DiffractionLayer(np.eye(2))
    with pytest.raises(ValidationError, match="detector_ports"):
        Network(2, [d], detector_ports=(2,))


def test_phases_roundtrip_and_length_check():
    net = small_net(n=4, slabs=3)
    assert net.phase_count == 12
    vals = np.arange(12, dtype=float)
    net.phases = vals
    assert np.array_equal(net.phases, vals)
    # the property returns a copy
    got = net.phases
    got[0] = -99.0
    assert net.phases[0] == 0.0
    with pytest.raises(ValidationError, match="12"):
        net.phases = np.zeros(5)


# -- propagation -------------------------------------------------------------


def test_forward_single_matches_batch():
    net = small_net()
    x = np.array([1.0, 1j, -1.0, 0.5])
    single = forward_single(net, x)
    batch = forward_batch(net, x[None, :])[0]
    assert np.array_equal(single, batch)


def test_forward_matches_transfer_matrix():
    net = small_net(n=5, slabs=3, detectors=(0,))
    t = net.transfer_matrix()
    gen = np.random.default_rng(0)
    x = gen.normal(size=(6, 5)) + 1j * gen.normal(size=(6, 5))
    assert np.allclose(forward_batch(net, x), x @ t.T, atol=1e-12)


def test_forward_linearity():
    net = small_net(n=6, slabs=2)
    gen = np.random.default_rng(3)
    x = gen.normal(size=6) + 1j * gen.normal(size=6)
    y = gen.normal(size=6) + 1j * gen.normal(size=6)
    a, b = 0.7 - 0.2j, -1.1 + 0.4j
    lhs = forward_single(net, a * x + b * y)
    rhs = a * forward_single(net, x) + b * forward_single(net, y)
    assert np.abs(lhs - rhs).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_forward_preserves_norm_for_unitary_layers(seed):
    net = small_net(n=4, seed=seed, slabs=2)
    gen = np.random.default_rng(seed + 1)
    x = gen.normal(size=4) + 1j * gen.normal(size=4)
    y = forward_single(net, x)
    assert np.isclose(np.linalg.norm(y), np.linalg.norm(x), atol=1e-10)


def test_forward_rejects_wrong_width():
    net = small_net(n=4)
    with pytest.raises(ValidationError, match="4"):
        forward_single(net, np.ones(3))


# -- detection ---------------------------------------------------------------


def identity_net(n, detectors):
    return Network(n, [DiffractionLayer(np.eye(n))], detector_ports=detectors)


def test_detect_intensity_oracle():
    net = identity_net(2, (0,))
    fields = np.array([[[3.0 + 4.0j, 7.0]]])  # (freq=1, slot=1, N=2)
    assert np.allclose(detect(net, fields), [25.0])


def test_detect_sums_over_frequency():
    net = identity_net(2, (0,))
    fields = np.array([[[1.0, 0.0]], [[1j, 0.0]], [[-1.0, 0.0]]])  # 3 freqs
    assert np.allclose(detect(net, fields), [3.0])


def test_detect_slot_major_ordering():
    net = identity_net(2, (0, 1))
    fields = np.array([[[1.0, 2.0], [3.0, 4.0]]])  # (1 freq, 2 slots, 2 ports)
    assert np.allclose(detect(net, fields), [1.0, 4.0, 9.0, 16.0])


def test_detect_batched_shape():
    net = identity_net(3, (0, 2))
    gen = np.random.default_rng(0)
    fields = gen.normal(size=(5, 2, 2, 3)) + 0j
    out = detect(net, fields)
    assert out.shape == (5, 4)
    assert np.all(out >= 0)


def test_detect_quadratic_scaling():
    net = small_net(n=4, detectors=(1, 3))
    gen = np.random.default_rng(5)
    fields = gen.normal(size=(2, 1, 4)) + 1j * gen.normal(size=(2, 1, 4))
    base = detect(net, fields)
    scaled = detect(net, 3.0 * fields)
    assert np.allclose(scaled, 9.0 * base, rtol=1e-12)


def test_detect_error_paths():
    net = identity_net(2, (0,))
    with pytest.raises(ValidationError, match="freq"):
        detect(net, np.zeros((0, 1, 2), dtype=complex))
    with pytest.raises(ValidationError, match="detector"):
        detect(identity_net(2, ()), np.ones((1, 1, 2)))
    with pytest.raises(ValidationError, match="shape"):
        detect(net, np.ones((2, 2)))


# -- readout -----------------------------------------------------------------


def test_classify_scores_and_ties():
    head = LinearHead(np.eye(3), np.zeros(3))
    scores, k = classify(head, np.array([0.5, 0.5, 0.1]))
    assert np.allclose(scores, [0.5, 0.5, 0.1])
    assert k == 0  # tie goes to the lowest index
    _, ks = classify(head, np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]))
    assert ks.tolist() == [1, 2]


def test_class_ports_frozen_values():
    assert class_ports(32, 5) == (3, 9, 16, 22, 28)
    assert class_ports(32, 10) == (1, 4, 8, 11, 14, 17, 20, 24, 27, 30)
    assert class_ports(32, 2) == (8, 24)


def test_class_ports_are_valid_indices():
    for n_cls in range(2, 17):
        ports = class_ports(32, n_cls)
        assert len(set(ports)) == n_cls
        assert all(0 <= p < 32 for p in ports)
        assert list(ports) == sorted(ports)


def test_class_ports_too_many_classes():
    with pytest.raises(ValidationError, match="distinct"):
        class_ports(4, 5)


def test_classify_by_port_energy():
    net = identity_net(4, (0, 1, 2, 3))
    d = np.array([0.1, 0.9, 0.3, 0.2])
    assert classify_by_port_energy(net, d, (1, 3)) == 0
    assert classify_by_port_energy(net, d, (0, 2)) == 1
    batch = np.array([[1.0, 0.0, 2.0, 0.0], [0.0, 0.0, 1.0, 5.0]])
    got = classify_by_port_energy(net, batch, (2, 3))
    assert got.tolist() == [0, 1]


def test_classify_by_port_energy_requires_detector_subset():
    net = identity_net(4, (0, 1))
    with pytest.raises(ValidationError, match="detector"):
        classify_by_port_energy(net, np.array([1.0, 2.0]), (0, 3))


# -- cascade -----------------------------------------------------------------


def test_cascade_equals_matrix_product():
    a = small_net(n=4, seed=1, detectors=(0,))
    b = small_net(n=4, seed=2, detectors=(1, 2))
    c = cascade_boards(a, b)
    assert c.detector_ports == (1, 2)
    t = b.transfer_matrix() @ a.transfer_matrix()
    assert np.abs(c.transfer_matrix() - t).max() < 1e-12
    gen = np.random.default_rng(9)
    x = gen.normal(size=(3, 4)) + 1j * gen.normal(size=(3, 4))
    seq = forward_batch(b, forward_batch(a, x))
    assert np.abs(forward_batch(c, x) - seq).max() < 1e-12


def test_cascade_port_mismatch():
    with pytest.raises(ValidationError, match="cascade"):
        cascade_boards(small_net(n=4), small_net(n=6))


# -- serialization -----------------------------------------------------------


def test_save_load_roundtrip_exact(tmp_path):
    net = small_net(n=5, seed=11, detectors=(0, 4), slabs=2)
    net.input_ports = (1, 2)
    path = tmp_path / "net.txt"
    save_network(net, path)
    back = load_network(path)
    assert back.port_count == 5
    assert back.detector_ports == (0, 4)
    assert back.input_ports == (1, 2)
    assert len(back.layers) == len(net.layers)
    for mine, theirs in zip(net.layers, back.layers):
        if isinstance(mine, DiffractionLayer):
            assert np.array_equal(mine.matrix, theirs.matrix)
            assert mine.source == theirs.source
        else:
            assert np.array_equal(mine.phases, theirs.phases)


def test_load_network_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not-a-network v9 ports=2\nend\n")
    with pytest.raises(ValidationError):
        load_network(path)
