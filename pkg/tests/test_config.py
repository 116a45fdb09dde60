import json
import os

import pytest

from rfadvq import config
from rfadvq.attacks import AttackKind
from rfadvq.config import AttackGrid
from rfadvq.config import EvaluationSettings
from rfadvq.vqvae import QuantizeMode
from rfadvq.waveforms import ModulationScheme

INI = """
[experiment]
seed = 7
output = ./runs/desk
reuse = no

[dataset]
train_per_class = 50
test_per_class = 10
schemes = 4ASK, 16PSK

[classifier]
epochs = 3
target_accuracy = 0.5

[vqvae]
beta = 0.5
codebook_size = 64

[attacks]
kinds = FGSM1; pgd
epsilons = 0.1, 0.2
pgd_steps = 5
pgd_step_size = none

[evaluation]
quantize_mode = argmax
trials = 1
plots = off
"""


def test_defaults(monkeypatch):
    monkeypatch.delenv(config.OUTPUT_ROOT_ENV, raising=False)
    cfg = config.parse()
    assert cfg.seed == 0
    assert cfg.reuse is True
    assert cfg.train_per_class == 500
    assert cfg.test_per_class == 100
    assert cfg.dataset.schemes == tuple(ModulationScheme)
    assert cfg.attacks.kinds == (AttackKind.FGSM1, AttackKind.FGSM2, AttackKind.PGD)
    assert cfg.attacks.epsilons == (0.01, 0.06, 0.1, 0.2, 0.3)
    assert cfg.vqvae.beta == 0.25
    assert cfg.vqvae.codebook_size == 128
    assert cfg.evaluation.quantize_mode is QuantizeMode.STOCHASTIC
    assert cfg.output == os.path.join(os.curdir, 'rfadvq-output')


def test_output_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(config.OUTPUT_ROOT_ENV, str(tmp_path))
    assert config.parse().output == str(tmp_path)
    assert config.parse('[experiment]\noutput = elsewhere').output == 'elsewhere'


def test_parse():
    cfg = config.parse(INI)
    assert cfg.seed == 7
    assert cfg.output == './runs/desk'
    assert cfg.reuse is False
    assert cfg.train_per_class == 50
    assert cfg.test_per_class == 10
    assert cfg.dataset.per_class_count == 60
    assert cfg.dataset.schemes == (ModulationScheme.ASK4, ModulationScheme.PSK16)
    assert cfg.classifier.epochs == 3
    assert cfg.classifier.target_accuracy == 0.5
    assert cfg.vqvae.beta == 0.5
    assert cfg.vqvae.codebook_size == 64
    assert cfg.attacks.kinds == (AttackKind.FGSM1, AttackKind.PGD)
    assert cfg.attacks.epsilons == (0.1, 0.2)
    assert cfg.attacks.pgd_step_size is None
    assert cfg.evaluation.quantize_mode is QuantizeMode.ARGMAX
    assert cfg.evaluation.trials == 1
    assert cfg.evaluation.plots is False


def test_overrides():
    cfg = config.parse(INI, {'classifier.epochs': 9, 'attacks.epsilons': '0.3',
                             'experiment.seed': None, 'vqvae.beta': 1.0})
    assert cfg.classifier.epochs == 9
    assert cfg.attacks.epsilons == (0.3,)
    assert cfg.seed == 7
    assert cfg.vqvae.beta == 1.0


def test_stage_seeds():
    a = config.parse('[experiment]\nseed = 3')
    b = config.parse('[experiment]\nseed = 3')
    c = config.parse('[experiment]\nseed = 4')
    seeds = [a.dataset.seed, a.classifier.seed, a.vqvae.seed, a.attacks.seed, a.evaluation.seed]
    assert len(set(seeds)) == 5
    assert seeds == [b.dataset.seed, b.classifier.seed, b.vqvae.seed, b.attacks.seed, b.evaluation.seed]
    assert a.classifier.seed != c.classifier.seed
    # an explicit seed takes precedence
    assert config.parse('[experiment]\nseed = 3\n[vqvae]\nseed = 11').vqvae.seed == 11


@pytest.mark.parametrize(
    ('text', 'match'),
    [('[network]\nport = 1', r'Unknown configuration section \[network\]'),
     ('[classifier]\nepoch = 3', r"Unknown key 'epoch' in section \[classifier\]"),
     ('[classifier]\nepochs = three', r'Invalid value for \[classifier\] epochs'),
     ('[experiment]\nreuse = maybe', r'Invalid value for \[experiment\] reuse'),
     ('[attacks]\nkinds = CW', r'Invalid value for \[attacks\] kinds'),
     ('[attacks]\nepsilons = 0.1, -0.2', r'Every epsilon must be >= 0'),
     ('[dataset]\ntrain_per_class = 0', r'Invalid dataset size'),
     ('[dataset]\nschemes = 64QAM', r'Invalid value for \[dataset\] schemes'),
     ('[evaluation]\ntrials = 0', r'trials must be >= 1')])
def test_invalid(text, match):
    with pytest.raises(ValueError, match=match):
        config.parse(text)


def test_attack_grid_specs():
    grid = AttackGrid(kinds=('FGSM2', 'PGD'), epsilons=(0.1, 0.2, 0.3), pgd_steps=4, seed=5)
    specs = grid.specs()
    assert [s.name for s in specs] == ['FGSM2-0.1', 'FGSM2-0.2', 'FGSM2-0.3', 'PGD-0.1', 'PGD-0.2', 'PGD-0.3']
    assert len({s.seed for s in specs}) == 6
    assert all(s.pgd_steps == 4 for s in specs)
    assert [s.seed for s in specs] == [s.seed for s in grid.specs()]
    with pytest.raises(ValueError, match=r'attack kind'):
        AttackGrid(kinds=())
    with pytest.raises(ValueError, match=r'epsilon'):
        AttackGrid(epsilons=())


def test_evaluation_settings():
    assert EvaluationSettings(quantize_mode='nearest').quantize_mode is QuantizeMode.ARGMAX
    with pytest.raises(ValueError, match=r'distance_trials'):
        EvaluationSettings(distance_trials=1)


def test_as_dict_is_json():
    d = config.parse(INI).as_dict()
    text = json.dumps(d, sort_keys=True)
    assert json.loads(text)['dataset']['schemes'] == ['ASK4', 'PSK16']
    assert d['attacks']['kinds'] == ['FGSM1', 'PGD']
    assert d['evaluation']['quantize_mode'] == 'argmax'


def test_load(tmp_path):
    file = os.path.join(tmp_path, 'desk.ini')
    with open(file, mode='wt', encoding='utf-8') as fp:
        fp.write(INI)
    assert config.load(file) == config.parse(INI)
    assert config.load(file, {'evaluation.trials': 4}).evaluation.trials == 4
    with pytest.raises(OSError):
        config.load(os.path.join(tmp_path, 'missing.ini'))
