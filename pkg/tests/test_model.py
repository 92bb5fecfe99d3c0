import numpy as np
import pytest

from compgcn.graph import MultiRelGraph, augment
from compgcn.model import (
    CompGCNModel,
    LayerParams,
    ModelConfig,
    RelationBasis,
    compose,
    encode,
    expected_parameter_count,
    layer_forward,
    materialize_relation_inputs,
    reduction_preset,
)
from compgcn.numeric import ShapeError, Tensor
from compgcn.synthetic import random_kg
from oracles import corr_loop, dense_layer, kipf_dense, relation_adjacency

COMPOSITIONS = ("sub", "mult", "corr")


def random_graph(rng, max_entities=8, max_relations=4):
    n = int(rng.integers(1, max_entities + 1))
    R = int(rng.integers(1, max_relations + 1))
    cand = [(s, r, o) for s in range(n) for r in range(R) for o in range(n)]
    k = int(rng.integers(0, min(len(cand), 12) + 1))
    pick = rng.choice(len(cand), size=k, replace=False)
    return MultiRelGraph.from_splits(n, R, [cand[i] for i in pick])


def layer_weights(p: LayerParams):
    if p.weight_mode == "direction":
        return (p.W_O.data, p.W_I.data, p.W_S.data)
    if p.weight_mode == "shared":
        return p.W.data
    return [w.data for w in p.W_r]


def run_both(g, rng, op, weight_mode="direction", norm_mode="none", scalars=False, d_in=5, d_out=3):
    ag = augment(g)
    n_rel = ag.aug_relation_count
    H = rng.normal(size=(g.num_entities, d_in))
    Z = rng.normal(size=(n_rel, d_in))
    p = LayerParams.init(d_in, d_out, n_rel, rng, weight_mode, scalars)
    if scalars:
        p.alpha.data[...] = rng.normal(size=n_rel)
    h, z = layer_forward(ag, Tensor(H), Tensor(Z), p, op, norm_mode=norm_mode)
    A = relation_adjacency(g.num_entities, g.num_relations, g.train_triples.tolist())
    ref = dense_layer(A, H, Z, layer_weights(p), op, norm_mode, weight_mode,
                      alpha=p.alpha.data if scalars else None)
    return h.data, ref, z.data, Z @ p.W_rel.data.T


@pytest.mark.parametrize("op", COMPOSITIONS)
@pytest.mark.parametrize("weight_mode", ["direction", "shared", "relation"])
@pytest.mark.parametrize("norm_mode", ["none", "in_degree", "symmetric"])
def test_sparse_matches_dense_oracle(op, weight_mode, norm_mode):
    rng = np.random.default_rng(17)
    for _ in range(6):
        h, ref, z, zref = run_both(random_graph(rng), rng, op, weight_mode, norm_mode)
        np.testing.assert_allclose(h, ref, rtol=0, atol=1e-10)
        np.testing.assert_allclose(z, zref, rtol=0, atol=1e-12)


def test_relation_scalars_match_dense_oracle():
    rng = np.random.default_rng(3)
    for _ in range(5):
        h, ref, _, _ = run_both(random_graph(rng), rng, "mult", "shared", "symmetric", scalars=True)
        np.testing.assert_allclose(h, ref, rtol=0, atol=1e-10)


def test_self_loop_fixed_point():
    g = MultiRelGraph.from_splits(1, 0, [])
    ag = augment(g)
    p = LayerParams.init(3, 3, 1, np.random.default_rng(0), activation="identity")
    p.W_S.data[...] = np.eye(3)
    h = Tensor([[0.3, -1.0, 2.0]])
    out, _ = layer_forward(ag, h, Tensor(np.zeros((1, 3))), p, "sub")
    assert np.array_equal(out.data, h.data)


def test_two_node_hand_case():
    g = MultiRelGraph.from_splits(2, 1, [(0, 0, 1)])
    ag = augment(g)
    p = LayerParams.init(2, 2, 3, np.random.default_rng(0), activation="identity")
    for w in (p.W_O, p.W_I, p.W_S):
        w.data[...] = np.eye(2)
    H = np.array([[1.0, 2.0], [10.0, 20.0]])
    out, _ = layer_forward(ag, Tensor(H), Tensor(np.zeros((3, 2))), p, "sub")
    assert out.data.tolist() == [[11.0, 22.0], [11.0, 22.0]]


def test_compose_identities():
    x = Tensor(np.random.default_rng(1).normal(size=8))
    assert np.array_equal(compose("sub", x, Tensor(np.zeros(8))).data, x.data)
    assert np.array_equal(compose("mult", x, Tensor(np.ones(8))).data, x.data)
    e0 = np.zeros(8)
    e0[0] = 1
    assert np.array_equal(compose("corr", Tensor(e0), x).data, x.data)
    y = Tensor(np.random.default_rng(2).normal(size=8))
    assert np.array_equal(compose("corr", x, y).data, corr_loop(x.data, y.data))
    with pytest.raises(ShapeError):
        compose("sub", x, Tensor(np.ones(3)))


def test_layer_rejects_bad_shapes():
    g = random_kg(5, 2, 6, seed=0)
    ag = augment(g)
    p = LayerParams.init(4, 4, 5, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        layer_forward(ag, Tensor(np.ones((4, 4))), Tensor(np.ones((5, 4))), p, "mult")
    with pytest.raises(ShapeError):
        layer_forward(ag, Tensor(np.ones((5, 4))), Tensor(np.ones((4, 4))), p, "mult")


def test_output_shapes():
    rng = np.random.default_rng(4)
    for n in (1, 3, 8):
        g = random_kg(n, 2, min(4, 2 * n * n), seed=n, valid_frac=0, test_frac=0)
        ag = augment(g)
        p = LayerParams.init(6, 2, 5, rng)
        h, z = layer_forward(ag, Tensor(rng.normal(size=(n, 6))), Tensor(rng.normal(size=(5, 6))),
                             p, "corr")
        assert h.shape == (n, 2) and z.shape == (5, 2)


# -- reductions --------------------------------------------------------------

def kipf_setup(rng, n=7):
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = [pairs[i] for i in rng.choice(len(pairs), size=9, replace=False)]
    g = MultiRelGraph.from_splits(n, 1, [(u, 0, v) for u, v in edges])
    return g, edges


def test_kipf_preset_matches_normalised_adjacency():
    rng = np.random.default_rng(5)
    for _ in range(10):
        g, edges = kipf_setup(rng)
        cfg = reduction_preset("kipf", [4, 3])
        model = CompGCNModel(cfg, g.num_entities, 3, rng)
        H, _ = encode(model, augment(g))
        ref = kipf_dense(g.num_entities, edges, model.entity_embeddings.data, model.layers[0].W.data)
        np.testing.assert_allclose(H.data, ref, rtol=0, atol=1e-10)


def test_weighted_with_unit_scalars_equals_kipf():
    rng = np.random.default_rng(6)
    g, _ = kipf_setup(rng)
    kipf = CompGCNModel(reduction_preset("kipf", [4, 3]), g.num_entities, 3, np.random.default_rng(1))
    wgcn = CompGCNModel(reduction_preset("weighted", [4, 3]), g.num_entities, 3, np.random.default_rng(1))
    assert np.array_equal(wgcn.layers[0].alpha.data, np.ones(3))
    wgcn.entity_embeddings.data[...] = kipf.entity_embeddings.data
    wgcn.layers[0].W.data[...] = kipf.layers[0].W.data
    ag = augment(g)
    assert np.array_equal(encode(kipf, ag)[0].data, encode(wgcn, ag)[0].data)


def test_relational_preset_matches_dense():
    rng = np.random.default_rng(7)
    g = random_kg(5, 3, 12, seed=7, valid_frac=0, test_frac=0)
    cfg = reduction_preset("relational", [4, 3])
    model = CompGCNModel(cfg, 5, 7, rng)
    H, _ = encode(model, augment(g))
    A = relation_adjacency(5, 3, g.train_triples.tolist())
    ref = dense_layer(A, model.entity_embeddings.data, model.relation_inputs().data,
                      [w.data for w in model.layers[0].W_r], "first", "in_degree", "relation")
    np.testing.assert_allclose(H.data, ref, rtol=0, atol=1e-10)


def test_directed_preset_is_first_projection():
    g = random_kg(6, 2, 10, seed=8)
    ag = augment(g)
    a = CompGCNModel(reduction_preset("directed", [4, 4]), 6, 5, np.random.default_rng(2))
    b = CompGCNModel(ModelConfig(dims=[4, 4], composition="first"), 6, 5, np.random.default_rng(2))
    assert np.array_equal(encode(a, ag)[0].data, encode(b, ag)[0].data)
    A = relation_adjacency(6, 2, g.train_triples.tolist())
    L = a.layers[0]
    ref = dense_layer(A, a.entity_embeddings.data, a.relation_inputs().data,
                      (L.W_O.data, L.W_I.data, L.W_S.data), "first")
    np.testing.assert_allclose(encode(a, ag)[0].data, ref, rtol=0, atol=1e-10)


def test_unknown_preset():
    with pytest.raises(ValueError):
        reduction_preset("gat", [4, 4])


def test_relation_agnostic_layer_ignores_relation_ids():
    g = random_kg(8, 4, 20, seed=9, valid_frac=0, test_frac=0)
    shuffled = g.triples.copy()
    shuffled[:, 1] = np.array([2, 0, 3, 1])[shuffled[:, 1]]
    h = MultiRelGraph(8, g.relations, shuffled, g.split)
    model = CompGCNModel(reduction_preset("kipf", [4, 4]), 8, 9, np.random.default_rng(0))
    assert np.array_equal(encode(model, augment(g))[0].data, encode(model, augment(h))[0].data)


# -- structure ---------------------------------------------------------------

@pytest.mark.parametrize("op", COMPOSITIONS)
@pytest.mark.parametrize("norm", ["none", "in_degree", "symmetric"])
def test_permutation_equivariance_exact(op, norm):
    rng = np.random.default_rng(10)
    g = random_kg(12, 3, 40, seed=10)
    n = g.num_entities
    pi = rng.permutation(n)
    t = g.triples.copy()
    t[:, 0], t[:, 2] = pi[t[:, 0]], pi[t[:, 2]]
    gp = MultiRelGraph(n, g.relations, t, g.split)
    cfg = ModelConfig(dims=[8, 8, 8], composition=op, norm_mode=norm)
    m1 = CompGCNModel(cfg, n, 7, np.random.default_rng(1))
    m2 = CompGCNModel(cfg, n, 7, np.random.default_rng(1))
    m2.entity_embeddings.data[pi] = m1.entity_embeddings.data
    H1, Z1 = encode(m1, augment(g))
    H2, Z2 = encode(m2, augment(gp))
    assert np.array_equal(H2.data[pi], H1.data)
    assert np.array_equal(Z1.data, Z2.data)


def test_encode_zero_layers_is_identity():
    g = random_kg(4, 2, 5, seed=0)
    m = CompGCNModel(ModelConfig(dims=[3]), 4, 5, np.random.default_rng(0))
    H, Z = encode(m, augment(g))
    assert H is m.entity_embeddings and Z is m.free_relations


def test_encode_two_layers_is_two_applications():
    g = random_kg(6, 2, 9, seed=1)
    ag = augment(g)
    m = CompGCNModel(ModelConfig(dims=[4, 5, 3], composition="corr"), 6, 5, np.random.default_rng(0))
    h, z = m.entity_embeddings, m.relation_inputs()
    for layer in m.layers:
        h, z = layer_forward(ag, h, z, layer, "corr")
    H, Z = encode(m, ag)
    assert np.array_equal(H.data, h.data) and np.array_equal(Z.data, z.data)
    assert H.shape == (6, 3) and Z.shape == (5, 3)


def test_encode_relation_count_mismatch():
    g = random_kg(4, 2, 5, seed=0)
    m = CompGCNModel(ModelConfig(dims=[3, 3]), 4, 7, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        encode(m, augment(g))


def test_dropout_only_in_training():
    g = random_kg(6, 2, 9, seed=1)
    ag = augment(g)
    m = CompGCNModel(ModelConfig(dims=[4, 4], dropout=0.5), 6, 5, np.random.default_rng(0))
    a, _ = encode(m, ag)
    b, _ = encode(m, ag)
    assert np.array_equal(a.data, b.data)
    c, _ = encode(m, ag, training=True, rng=np.random.default_rng(0))
    assert not np.array_equal(a.data, c.data)


# -- basis -------------------------------------------------------------------

def test_basis_materialisation():
    z = materialize_relation_inputs(RelationBasis(Tensor([[1.0, 0.0]]), Tensor([[2.0]])))
    assert z.data.tolist() == [[2.0, 0.0]]
    V = np.random.default_rng(0).normal(size=(5, 4))
    z = materialize_relation_inputs(RelationBasis(Tensor(V), Tensor(np.eye(5))))
    assert np.array_equal(z.data, V)
    with pytest.raises(ValueError):
        materialize_relation_inputs(RelationBasis(Tensor(np.zeros((0, 4))), Tensor(np.zeros((5, 0)))))
    with pytest.raises(ValueError):
        materialize_relation_inputs(None, None)
    with pytest.raises(ValueError):
        ModelConfig(dims=[4], basis=0)


def test_freeze_excludes_parameters():
    m = CompGCNModel(ModelConfig(dims=[4, 4], basis=3), 5, 7, np.random.default_rng(0))
    m.freeze("basis.coefficients")
    params = m.trainable()
    assert "basis.coefficients" not in params and "basis.vectors" in params
    assert not m.basis.coefficients.requires_grad
    with pytest.raises(KeyError):
        m.freeze("nope")


# -- parameters ---------------------------------------------------------------

def test_parameter_count_hand_value():
    m = CompGCNModel(ModelConfig(dims=[8, 6, 4]), 10, 7, np.random.default_rng(0))
    assert m.count_parameters() == 10 * 8 + 7 * 8 + 4 * 8 * 6 + 4 * 6 * 4 == 424


@pytest.mark.parametrize("cfg", [
    ModelConfig(dims=[8, 6, 4]),
    ModelConfig(dims=[8, 8], basis=3),
    ModelConfig(dims=[5, 5, 5, 5], basis=1, composition="corr"),
    reduction_preset("kipf", [4, 4]),
    reduction_preset("relational", [4, 3, 2]),
    reduction_preset("weighted", [4, 4]),
    reduction_preset("directed", [6, 2]),
])
def test_parameter_count_closed_form(cfg):
    m = CompGCNModel(cfg, 11, 9, np.random.default_rng(0))
    assert m.count_parameters() == expected_parameter_count(cfg, 11, 9)


def test_state_dict_round_trip():
    cfg = ModelConfig(dims=[4, 4], basis=2)
    a = CompGCNModel(cfg, 5, 7, np.random.default_rng(0))
    b = CompGCNModel(cfg, 5, 7, np.random.default_rng(1))
    b.load_state_dict(a.state_dict())
    for k, v in a.state_dict().items():
        assert np.array_equal(v, b.state_dict()[k])
    with pytest.raises(KeyError):
        b.load_state_dict({})


def test_config_dict_round_trip():
    cfg = ModelConfig(dims=[4, 8, 8], composition="corr", basis=3, dropout=0.1)
    d = cfg.to_dict()
    assert d["K"] == 2
    assert ModelConfig.from_dict(d) == cfg
    with pytest.raises(ValueError):
        ModelConfig(dims=[4], composition="add")
    with pytest.raises(ValueError):
        ModelConfig(dims=[4], dropout=1.0)


def test_model_gradients_match_finite_differences():
    from compgcn.checks import check_pipeline
    for op in COMPOSITIONS:
        assert check_pipeline(op, seed=3).max_rel_error < 1e-4
