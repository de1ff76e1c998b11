from pathlib import Path

import numpy as np
import pytest

from qrn import autograd as ag
from qrn import data, trainer
from qrn.autograd import Parameter
from qrn.cell import QrnConfig
from qrn.encoding import InputError
from qrn.model import QrnModel

DATA = Path(__file__).parent / "data"


def test_loss_is_mean_negative_log_likelihood():
    p = np.array([[0.25, 0.75], [0.5, 0.5]])
    L = trainer.loss(p, [1, 0]).item()
    assert L == pytest.approx(-(np.log(0.75) + np.log(0.5)) / 2)


def test_loss_adds_weight_decay():
    w = Parameter("w", np.array([1.0, 2.0]))
    L = trainer.loss(np.array([1.0, 0.0]), 0, [w], l2=0.1).item()
    assert L == pytest.approx(0.5)


def test_loss_rejects_bad_gold():
    with pytest.raises(InputError):
        trainer.loss(np.array([0.5, 0.5]), 2)


def test_adagrad_step():
    p = Parameter("p", np.array([1.0]))
    p.grad[...] = 2.0
    trainer.adagrad_step([p], lr=0.5)
    # accumulator 4, step 0.5 * 2 / 2
    assert p.accumulator[0] == pytest.approx(4.0)
    assert p.data[0] == pytest.approx(0.5)


def test_train_config_validation():
    with pytest.raises(ValueError):
        trainer.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        trainer.TrainConfig(precision="f16")
    assert trainer.TrainConfig.qa10k().batch_size == 128


def _tiny(precision="f64", epochs=3, restarts=2, seed=0, scan="parallel"):
    ds = data.load_qa_task(DATA, 1)
    mc = QrnConfig(hidden_size=8, forget_bias=2.5)
    tc = trainer.TrainConfig(hidden_size=8, max_epochs=epochs, restarts=restarts, seed=seed,
                             precision=precision, batch_size=8, scan=scan)
    return ds, mc, tc


def test_training_is_deterministic():
    ds, mc, tc = _tiny()
    m1, log1 = trainer.train(ds, mc, tc)
    m2, log2 = trainer.train(ds, mc, tc)
    assert [r.line() for rs in log1.restarts for r in rs] == [r.line() for rs in log2.restarts for r in rs]
    assert log1.chosen == log2.chosen
    for a, b in zip(m1.parameters(), m2.parameters()):
        np.testing.assert_array_equal(a.data, b.data)


def test_scan_modes_train_alike():
    logs = []
    for scan in ("sequential", "parallel"):
        ds, mc, tc = _tiny(epochs=2, restarts=1, scan=scan)
        logs.append(trainer.train(ds, mc, tc)[1])
    a, b = (np.array([[r.train_loss, r.dev_loss] for r in lg.restarts[0][1:]]) for lg in logs)
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_best_restart_is_kept():
    ds, mc, tc = _tiny(epochs=2, restarts=3)
    model, log = trainer.train(ds, mc, tc)
    assert log.chosen == int(np.argmin(log.best_dev_loss))
    dev_loss = model.mean_loss(model.prepare(ds.dev))
    assert dev_loss == pytest.approx(log.best_dev_loss[log.chosen])


def test_early_stopping():
    ds, mc, tc = _tiny(epochs=40, restarts=1)
    tc.patience_epochs = 1
    tc.learning_rate = 5.0  # overshoots, so dev loss soon stops improving
    _, log = trainer.train(ds, mc, tc)
    recs = log.restarts[0]
    assert len(recs) - 1 < 40
    # training stops once `patience` epochs pass without a better dev loss
    assert recs[-1].epoch - log.best_epoch[0] == tc.patience_epochs


def test_evaluate_counts_errors():
    ds, mc, tc = _tiny()
    model = trainer.build_model(ds, mc, tc, seed=0)
    err = trainer.evaluate(model, ds.test)
    preds = model.predict(model.prepare(ds.test))
    gold = np.array([model.vocab.index(ex.answer) for ex in ds.test])
    assert err == pytest.approx(np.mean(preds != gold))
    with pytest.raises(InputError):
        trainer.evaluate(model, [])


def test_epoch_record_line():
    rec = trainer.EpochRecord(3, 1.5, 0.25, 0.125)
    assert rec.line() == "epoch=3 train_loss=1.500000 dev_loss=0.250000 dev_err=0.125000"


def test_model_l2_excludes_nil_column_and_biases():
    ds, mc, tc = _tiny()
    model = trainer.build_model(ds, mc, tc, seed=0)
    manual = sum(float((p.data ** 2).sum()) for p in model.weight_matrices())
    manual -= float((model.A.data[:, model.vocab.nil] ** 2).sum())
    assert model.l2_term().item() == pytest.approx(manual)
    names = {p.name for p in model.biases()}
    assert names == {"qrn.b_z", "qrn.b_h", "qrn.b_r"}


def test_left_padding_matches_unpadded_story():
    ds, mc, tc = _tiny()
    model = QrnModel(mc, ds.vocab, seed=1, dtype=np.float64)
    items = model.prepare(ds.test[:6])
    with ag.no_tape():
        together = model.forward(model.pack(items))[0].data
        alone = np.stack([model.forward(model.pack([it]))[0].data[0] for it in items])
    np.testing.assert_allclose(together, alone, atol=1e-12)


def test_dialog_model_trains_and_ranks():
    ds = data.load_dialog_task(DATA, 1)
    mc = QrnConfig(hidden_size=8, head="dialog", use_match=True)
    tc = trainer.TrainConfig(hidden_size=8, max_epochs=2, restarts=1, precision="f64", batch_size=16)
    model, log = trainer.train(ds, mc, tc)
    items = model.prepare(ds.test)
    preds = model.predict(items)
    assert preds.shape == (len(items),)
    assert np.all((0 <= preds) & (preds < len(ds.candidates)))
    assert np.isfinite(log.best_dev_loss[0])
