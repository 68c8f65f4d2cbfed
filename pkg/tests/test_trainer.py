import csv

import numpy as np
import pytest

from conftest import small_academic_graph, toy_words
from hetembed.exceptions import ConfigError, HetEmbedError
from hetembed.trainer import TrainConfig, TrainedModel, train
from hetembed.walks import WalkConfig

WALK = WalkConfig(walks_per_node=4, walk_length=12, window=2, seed=0)


def _fit(variant, **kw):
    cfg = TrainConfig(variant=variant, dim=6, max_epochs=kw.pop("epochs", 5), batch_size=64, learning_rate=0.01, **kw)
    return train(small_academic_graph(), cfg, WALK, words=toy_words())


@pytest.fixture(scope="module")
def models():
    return {v: _fit(v) for v in ("hsg", "hsg-sr", "se-hsg")}


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(dim=0)
    with pytest.raises(ConfigError):
        TrainConfig(variant="bert")
    assert not TrainConfig(variant="hsg").uses_text


def test_text_variants_need_words():
    with pytest.raises(ConfigError, match="word vectors"):
        train(small_academic_graph(), TrainConfig(variant="se-hsg"), WALK, words=None)


@pytest.mark.parametrize("variant", ["hsg", "hsg-sr", "se-hsg"])
def test_loss_decreases_and_is_finite(models, variant):
    log = models[variant].log
    assert len(log.losses) == 6
    assert np.all(np.isfinite(log.losses))
    assert log.final_loss < log.initial_loss


def test_initial_loss_near_two_log_two(models):
    # rows start within +-0.5/d, so scores are close to zero
    assert abs(models["hsg"].log.initial_loss - 2 * np.log(2)) < 0.01


def test_se_hsg_parameter_layout(models):
    m = models["se-hsg"]
    n_content = int(m.content_mask.sum())
    assert m.params.theta.shape == (m.n_nodes - n_content, 6)
    assert np.all(m.params.row_of[m.content_mask] == -1)
    assert m.parameter_census() == {"embedding": (10 - 4) * 6, "encoder": 3 * 6 * 6 + 3 * 6 * 6}


def test_representations_use_encodings(models):
    for v in ("hsg-sr", "se-hsg"):
        m = models[v]
        reps = m.representations()
        assert np.allclose(reps[m.content_nodes], m.content_E)
        enc = m.encoder
        g = small_academic_graph()
        p1 = g.index("P1")
        assert np.allclose(reps[p1], enc.encode(g.content(p1))[0])
    hsg = models["hsg"]
    assert np.array_equal(hsg.representations(), hsg.params.theta)


@pytest.mark.parametrize("variant", ["hsg", "hsg-sr", "se-hsg"])
def test_model_file_roundtrip(models, variant, tmp_path):
    m = models[variant]
    m.save(tmp_path / "m.bin")
    back = TrainedModel.load(tmp_path / "m.bin")
    assert back.variant == variant and back.labels == m.labels
    assert np.array_equal(back.representations(), m.representations())
    assert back.fingerprint() == m.fingerprint()
    assert back.to_bytes() == m.to_bytes()
    assert back.log.losses == m.log.losses


def test_model_file_header(models):
    raw = models["se-hsg"].to_bytes()
    assert raw[:8] == b"HETEMBED"
    with pytest.raises(HetEmbedError, match="not a hetembed"):
        TrainedModel.from_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(HetEmbedError, match="truncated"):
        TrainedModel.from_bytes(raw[:100])


def test_training_is_deterministic():
    a = _fit("se-hsg", epochs=2).to_bytes()
    b = _fit("se-hsg", epochs=2).to_bytes()
    assert a == b


def test_different_seed_changes_model():
    a = _fit("hsg", epochs=1)
    b = train(small_academic_graph(), TrainConfig(variant="hsg", dim=6, max_epochs=1, seed=1), WALK)
    assert a.fingerprint() != b.fingerprint()


def test_tolerance_stops_early():
    m = _fit("hsg", epochs=200, tol=0.5)
    assert m.log.converged and m.log.n_epochs == 2


def test_infinite_tolerance_runs_all_epochs():
    m = _fit("hsg", epochs=7, tol=float("inf"))
    assert m.log.n_epochs == 7 and not m.log.converged


def test_log_csv(models, tmp_path):
    models["hsg"].log.write_csv(tmp_path / "log.csv")
    rows = list(csv.DictReader(open(tmp_path / "log.csv")))
    assert [r["epoch"] for r in rows] == [str(i) for i in range(6)]
    assert float(rows[0]["loss"]) == models["hsg"].log.losses[0]


def test_export_embeddings(models, tmp_path):
    m = models["hsg"]
    m.export_embeddings(tmp_path / "e.tsv", extra=[("NEW", np.ones(6))])
    lines = (tmp_path / "e.tsv").read_text().splitlines()
    assert len(lines) == 11 and lines[-1].startswith("NEW\t")
    label, vec = lines[0].split("\t")
    assert np.allclose([float(x) for x in vec.split()], m.representations()[0])
