"""Acceptance suite: one test per exit criterion, at its stated tolerance.

Each criterion is property-based or desk-scale quantitative; the reported
reference metrics from full-size model runs are documented in the README and
are not reproducible here.
"""

import json
import math
import struct
import time
from itertools import permutations, product

import numpy as np
import pytest
from scipy.stats import spearmanr

from langgeo.binarizer import pack_bits
from langgeo.clustering import (
    LabeledPartition,
    adjusted_rand_index,
    confusion_and_align,
    kmeans,
    purity,
    silhouette,
)
from langgeo.errors import FormatError
from langgeo.formats import (
    fnv1a64,
    matrix_from_bytes,
    matrix_to_bytes,
    vector_from_bytes,
    vector_to_bytes,
)
from langgeo.importance import (
    Hessian,
    LayerWeights,
    obd_error_increase,
    optimal_update,
    score_layer,
)
from langgeo.mds import torgerson
from langgeo.metricspace import (
    MaskedDistanceMatrix,
    aggregate,
    distance_matrix,
)
from langgeo.pipeline import PipelineConfig, RunSpec, run_pipeline
from langgeo.synth import SyntheticSpec, synth_generate
from langgeo.treelayout import SpanningTree, kamada_kawai, minimum_spanning_tree

from conftest import make_vector, random_spd
from test_clustering import (
    brute_force_alignment_trace,
    naive_ari,
    naive_purity,
    naive_silhouette,
)
from test_treelayout import brute_force_mst_weight


def full_matrix(values, labels=None):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if labels is None:
        labels = tuple(f"n{i}" for i in range(n))
    return MaskedDistanceMatrix(
        values=values, observed=np.ones((n, n), dtype=bool), labels=labels
    )


def test_obd_error_matches_exact_constrained_minimum():
    """E_q equals the closed-form constrained quadratic minimum and lower-bounds
    10,000 random feasible perturbations, for 100 random instances."""
    gen = np.random.default_rng(101)
    start = time.time()
    for _ in range(100):
        d = int(gen.integers(2, 9))
        hessian = Hessian(random_spd(gen, d))
        w = gen.normal(size=d)
        # closed-form identity at every index
        for q in range(d):
            update = optimal_update(w, hessian, q)
            exact = 0.5 * update.delta @ hessian.data @ update.delta
            e_q = obd_error_increase(w, hessian, q)
            assert e_q == pytest.approx(exact, rel=1e-9)
            assert update.delta[q] + w[q] == pytest.approx(0.0, abs=1e-9 * abs(w[q]))
        # numerical optimality at a random index
        q = int(gen.integers(0, d))
        e_q = obd_error_increase(w, hessian, q)
        samples = gen.normal(size=(10_000, d))
        samples[:, q] = -w[q]
        values = 0.5 * np.einsum("nd,de,ne->n", samples, hessian.data, samples)
        assert e_q <= values.min() * (1 + 1e-9) + 1e-12
    elapsed = time.time() - start
    assert elapsed < 5.0, f"OBD oracle took {elapsed:.2f}s, budget 5s"


def test_importance_scores_match_explicit_inverse():
    """Scores equal the explicit-inverse formula within 1e-10 relative error."""
    from test_importance import gaussian_inverse

    gen = np.random.default_rng(202)
    for d in range(3, 33):
        hessian_data = random_spd(gen, d)
        rows = int(gen.integers(1, 12))
        w = gen.normal(size=(rows, d))
        expected = w**2 / np.diag(gaussian_inverse(hessian_data))[None, :]
        got = score_layer(LayerWeights(w), Hessian(hessian_data))
        np.testing.assert_allclose(got.data, expected, rtol=1e-10)


def test_hamming_metric_axioms():
    """Identity, symmetry, and triangle inequality: exhaustive over every
    pair and triple of vectors up to length 10, randomized at length 2^16."""
    for length in range(1, 11):
        count = 2**length
        vectors = [
            make_vector([(value >> b) & 1 for b in range(length)], language=f"v{value}")
            for value in range(count)
        ]
        dist = distance_matrix(vectors).values.astype(np.uint8)
        # identity of indiscernibles and symmetry, all pairs
        assert np.all(np.diag(dist) == 0)
        off = ~np.eye(count, dtype=bool)
        assert np.all(dist[off] > 0)
        assert np.array_equal(dist, dist.T)
        # triangle inequality, all ordered triples, in chunks of rows
        chunk = max(1, 2**21 // (count * count))
        for lo in range(0, count, chunk):
            hi = min(lo + chunk, count)
            via = (dist[lo:hi, :, None] + dist[None, :, :]).min(axis=1)
            assert np.all(dist[lo:hi] <= via)

    gen = np.random.default_rng(303)
    n_bits = 2**16
    for _ in range(40):
        x, y, z = (
            make_vector(gen.integers(0, 2, size=n_bits), language=t)
            for t in ("x", "y", "z")
        )
        from langgeo.metricspace import hamming

        assert hamming(x, x) == 0
        assert hamming(x, y) == hamming(y, x)
        assert hamming(x, z) <= hamming(x, y) + hamming(y, z)


def test_mds_round_trip_recovers_dimension_and_distances():
    """50 random point sets: exact dimension recovery at epsilon=1e-10 and
    1e-8 relative distance reconstruction."""
    gen = np.random.default_rng(404)
    start = time.time()
    for _ in range(50):
        d0 = int(gen.integers(1, 6))
        n = int(gen.integers(d0 + 2, 41))
        points = gen.normal(size=(n, d0))
        diff = points[:, None, :] - points[None, :, :]
        values = np.sqrt(np.sum(diff * diff, axis=2))
        values = (values + values.T) / 2.0
        np.fill_diagonal(values, 0.0)
        matrix = full_matrix(values)
        emb = torgerson(matrix, epsilon=1e-10)
        assert emb.dim == d0, f"expected dimension {d0}, got {emb.dim}"
        recon = emb.pairwise_distances()
        off = ~np.eye(n, dtype=bool)
        rel = np.abs(recon[off] - values[off]) / values[off]
        assert rel.max() < 1e-8
    elapsed = time.time() - start
    assert elapsed < 10.0, f"MDS round trip took {elapsed:.2f}s, budget 10s"


def test_mst_matches_exhaustive_enumeration():
    """MST total weight equals the brute-force minimum over all labeled
    spanning trees for 200 random 5- and 6-node matrices."""
    gen = np.random.default_rng(505)
    for trial in range(200):
        n = 5 if trial % 2 == 0 else 6
        values = gen.uniform(0.1, 10.0, size=(n, n))
        values = (values + values.T) / 2.0
        np.fill_diagonal(values, 0.0)
        tree = minimum_spanning_tree(full_matrix(values))
        assert tree.total_weight == pytest.approx(
            brute_force_mst_weight(values), rel=1e-12
        )


def test_clustering_metrics_match_naive_oracles():
    """ARI and purity exact, silhouette to 1e-12, Hungarian alignment equal to
    the best of all permutations, on 100 random instances each."""
    gen = np.random.default_rng(606)
    for _ in range(100):
        n = int(gen.integers(2, 13))
        labels = [f"p{i}" for i in range(n)]
        ids_a = gen.integers(0, 4, size=n).tolist()
        ids_b = gen.integers(0, 4, size=n).tolist()
        part_a = LabeledPartition(dict(zip(labels, ids_a)), tuple("wxyz"))
        part_b = LabeledPartition(dict(zip(labels, ids_b)), tuple("wxyz"))
        assert adjusted_rand_index(part_a, part_b) == pytest.approx(
            naive_ari(ids_a, ids_b), abs=1e-12
        )
        assert purity(part_a, part_b) == pytest.approx(
            naive_purity(ids_a, ids_b), abs=1e-12
        )

    from langgeo.mds import Embedding

    for _ in range(100):
        n = int(gen.integers(4, 13))
        k = int(gen.integers(2, min(n, 4) + 1))
        ids = list(range(k)) + gen.integers(0, k, size=n - k).tolist()
        points = gen.normal(size=(n, 2))
        emb = Embedding(coordinates=points, labels=tuple(f"p{i}" for i in range(n)))
        part = LabeledPartition(
            dict(zip(emb.labels, ids)), tuple(f"g{j}" for j in range(k))
        )
        expected = naive_silhouette(emb.pairwise_distances().tolist(), ids)
        assert silhouette(part, embedding=emb) == pytest.approx(expected, abs=1e-12)

    for _ in range(100):
        r = int(gen.integers(2, 7))
        c = int(gen.integers(2, 7))
        n = int(gen.integers(max(r, c), 16))
        pred_ids = list(range(r)) + gen.integers(0, r, size=n - r).tolist()
        true_ids = list(range(c)) + gen.integers(0, c, size=n - c).tolist()
        labels = [f"p{i}" for i in range(n)]
        pred = LabeledPartition(
            dict(zip(labels, pred_ids)), tuple(f"r{j}" for j in range(r))
        )
        truth = LabeledPartition(
            dict(zip(labels, true_ids)), tuple(f"c{j}" for j in range(c))
        )
        matrix, perm = confusion_and_align(pred, truth)
        size = max(r, c)
        padded = np.zeros((size, size), dtype=np.int64)
        padded[:r, :c] = matrix.counts
        aligned_trace = int(np.trace(padded[list(perm), :]))
        assert aligned_trace == brute_force_alignment_trace(matrix.counts)
        assert aligned_trace >= int(np.trace(padded))


def test_end_to_end_synthetic_recovery():
    """Planted families (4x8, 65536 bits, three runs per language) are
    recovered with ARI 1.0 in at least 95 of 100 seeds; median runtime < 30s."""
    recovered = 0
    times = []
    for seed in range(100):
        start = time.time()
        spec = SyntheticSpec(
            families=4,
            members_per_family=8,
            n_bits=65_536,
            p_proto=0.25,
            p_member=0.02,
            seed=seed,
        )
        matrices = []
        truth = None
        for run in range(3):
            vectors, truth = synth_generate(
                spec, model_tag=f"m{run}", corpus_tag="c", run=run
            )
            matrices.append(distance_matrix(vectors))
        universe = sorted(truth.assignment)
        combined = aggregate(matrices, universe)
        emb = torgerson(combined)
        predicted = kmeans(emb, 4, seed=seed, restarts=10)
        ari = adjusted_rand_index(predicted, truth)
        times.append(time.time() - start)
        if ari == 1.0:
            recovered += 1
    median = sorted(times)[50]
    print(f"recovered {recovered}/100 seeds, median runtime {median:.3f}s")
    assert recovered >= 95, f"only {recovered}/100 seeds recovered"
    assert median < 30.0


def test_paper_scale_bookkeeping(tmp_path):
    """Three simulated models over 106/102/103-language corpora: the manifest
    reports 933 vectors and the embedding dimension stays within 106."""
    gen = np.random.default_rng(707)
    languages = [f"lang{i:03d}" for i in range(106)]
    corpora = {
        "corpusA": languages,
        "corpusB": languages[:-4],  # 102
        "corpusC": languages[:-3],  # 103
    }
    model_bits = {"model0": 1024, "model1": 896, "model2": 768}
    runs = []
    for model, bits in model_bits.items():
        for corpus, members in corpora.items():
            run_dir = tmp_path / f"{model}_{corpus}"
            run_dir.mkdir()
            for tag in members:
                vec = make_vector(
                    gen.integers(0, 2, size=bits),
                    language=tag,
                    model=model,
                    corpus=corpus,
                )
                from langgeo.formats import write_vector

                write_vector(run_dir / f"{tag}.lgv", vec)
            runs.append(RunSpec(model, corpus, (f"{model}_{corpus}/*.lgv",)))
    config = PipelineConfig(
        runs=tuple(runs), output_dir="out", base_dir=str(tmp_path)
    )
    result = run_pipeline(config)
    assert result.manifest["vector_count"] == 3 * (106 + 102 + 103) == 933
    assert result.embedding.n == 106
    assert result.embedding.dim <= 106
    manifest = json.loads((result.output_dir / "manifest.json").read_text())
    assert manifest["vector_count"] == 933


def test_kamada_kawai_descent_and_proportionality():
    """Stress never increases; unit paths and the 3-node star reach 1e-3
    adjacent-edge accuracy; layout lengths track edge weights (Spearman >= 0.95
    pooled over 50 random trees, n <= 30)."""
    # unit-edge path and 3-node star
    for nodes, edges in [
        (("a", "b", "c", "d"), ((0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0))),
        (("c", "a", "b"), ((0, 1, 1.0), (0, 2, 1.0))),
    ]:
        tree = SpanningTree(nodes, edges, float(sum(w for _, _, w in edges)))
        layout = kamada_kawai(tree)
        initial = kamada_kawai(tree, max_iter=0).stress
        assert layout.stress <= initial
        for i, j, w in tree.edges:
            got = math.dist(layout.positions[nodes[i]], layout.positions[nodes[j]])
            assert abs(got - w) / w <= 1e-3

    gen = np.random.default_rng(808)
    lengths, weights, per_tree = [], [], []
    for _ in range(50):
        n = int(gen.integers(5, 31))
        pts = gen.uniform(0.0, 10.0, size=(n, 2))
        diff = pts[:, None, :] - pts[None, :, :]
        values = np.sqrt((diff**2).sum(axis=2))
        values = (values + values.T) / 2.0
        np.fill_diagonal(values, 0.0)
        tree = minimum_spanning_tree(full_matrix(values))
        initial = kamada_kawai(tree, max_iter=0).stress
        layout = kamada_kawai(tree, tol=1e-4)
        assert layout.stress <= initial
        tree_lengths = [
            math.dist(layout.positions[tree.nodes[i]], layout.positions[tree.nodes[j]])
            for i, j, _ in tree.edges
        ]
        tree_weights = [w for _, _, w in tree.edges]
        lengths += tree_lengths
        weights += tree_weights
        per_tree.append(spearmanr(tree_lengths, tree_weights).statistic)
    pooled = spearmanr(lengths, weights).statistic
    print(f"pooled Spearman {pooled:.4f}, mean per-tree {np.mean(per_tree):.4f}")
    assert pooled >= 0.95
    assert np.mean(per_tree) >= 0.95


def _random_vector_bytes(gen):
    n_layers = int(gen.integers(1, 4))
    offsets = []
    cursor = 0
    layer_id = 0
    blocks = []
    for _ in range(n_layers):
        size = int(gen.integers(1, 64))
        offsets.append((layer_id, cursor, size))
        blocks.append(gen.integers(0, 2, size=size))
        cursor += size
        layer_id += int(gen.integers(1, 3))
    vec = make_vector(
        np.concatenate(blocks),
        language=f"lang{gen.integers(1000)}",
        model=f"model{gen.integers(10)}",
        corpus=f"corpus{gen.integers(10)}",
        layer_offsets=tuple(offsets),
    )
    return vec, vector_to_bytes(vec)


def _random_matrix_bytes(gen):
    n = int(gen.integers(1, 9))
    values = gen.uniform(0.0, 100.0, size=(n, n))
    values = (values + values.T) / 2.0
    np.fill_diagonal(values, 0.0)
    observed = gen.random((n, n)) < 0.85
    observed |= observed.T
    np.fill_diagonal(observed, True)
    values[~observed] = 0.0
    matrix = MaskedDistanceMatrix(
        values=values,
        observed=observed,
        labels=tuple(f"l{i}" for i in range(n)),
    )
    return matrix, matrix_to_bytes(matrix)


def test_format_round_trips_and_corruption(tmp_path):
    """1,000 random artifacts re-serialize byte-identically (a sample through
    real files); 20 corruption cases all raise the format error class."""
    gen = np.random.default_rng(909)
    for i in range(500):
        vec, data = _random_vector_bytes(gen)
        back = vector_from_bytes(data)
        assert back == vec
        assert vector_to_bytes(back) == data
        if i < 25:
            path = tmp_path / f"v{i}.lgv"
            path.write_bytes(data)
            assert path.read_bytes() == vector_to_bytes(vector_from_bytes(data))
    for i in range(500):
        matrix, data = _random_matrix_bytes(gen)
        back = matrix_from_bytes(data)
        np.testing.assert_array_equal(back.values, matrix.values)
        np.testing.assert_array_equal(back.observed, matrix.observed)
        assert back.labels == matrix.labels
        assert matrix_to_bytes(back) == data

    # corruption battery: every case must raise FormatError
    vec, vec_data = _random_vector_bytes(gen)
    matrix, mat_data = _random_matrix_bytes(gen)

    def resign(body):
        return body + struct.pack("<Q", fnv1a64(body))

    cases = []
    # 6 truncations at structurally different offsets (checksum re-signed so
    # the parser reaches the short field)
    for cut in (4, 9, 14, len(vec_data) // 2, len(vec_data) - 12):
        cases.append(("vector truncated", lambda d=vec_data, c=cut: vector_from_bytes(resign(d[:c]))))
    cases.append(("matrix truncated", lambda: matrix_from_bytes(resign(mat_data[: len(mat_data) // 2]))))
    # 2 shorter than the checksum itself
    cases.append(("vector stub", lambda: vector_from_bytes(b"LGV1")))
    cases.append(("matrix stub", lambda: matrix_from_bytes(b"")))
    # 4 bad magic / crossed magic
    cases.append(("vector bad magic", lambda: vector_from_bytes(resign(b"XXXX" + vec_data[4:-8]))))
    cases.append(("matrix bad magic", lambda: matrix_from_bytes(resign(b"XXXX" + mat_data[4:-8]))))
    cases.append(("vector as matrix", lambda: matrix_from_bytes(vec_data)))
    cases.append(("matrix as vector", lambda: vector_from_bytes(mat_data)))
    # 2 unsupported versions
    cases.append(
        ("vector bad version",
         lambda: vector_from_bytes(resign(vec_data[:4] + struct.pack("<I", 9) + vec_data[8:-8])))
    )
    cases.append(
        ("matrix bad version",
         lambda: matrix_from_bytes(resign(mat_data[:4] + struct.pack("<I", 9) + mat_data[8:-8])))
    )
    # 4 checksum flips: stored trailer and payload bytes
    def flip(data, index, bit=0x01):
        mutated = bytearray(data)
        mutated[index] ^= bit
        return bytes(mutated)

    cases.append(("vector trailer flip", lambda: vector_from_bytes(flip(vec_data, len(vec_data) - 1))))
    cases.append(("matrix trailer flip", lambda: matrix_from_bytes(flip(mat_data, len(mat_data) - 3))))
    cases.append(("vector payload flip", lambda: vector_from_bytes(flip(vec_data, len(vec_data) // 2))))
    cases.append(("matrix payload flip", lambda: matrix_from_bytes(flip(mat_data, len(mat_data) // 2, 0x10))))
    # 2 trailing garbage after the payload
    cases.append(("vector trailing", lambda: vector_from_bytes(resign(vec_data[:-8] + b"\x00"))))
    cases.append(("matrix trailing", lambda: matrix_from_bytes(resign(mat_data[:-8] + b"\x00\x00"))))

    assert len(cases) == 20
    for name, attempt in cases:
        with pytest.raises(FormatError):
            attempt()
