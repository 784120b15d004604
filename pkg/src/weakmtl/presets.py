"""Best hyper-parameters and multi-task loss weights found on the benchmark corpora.

``HYPERPARAMS[dataset][model]`` holds learning rate, batch size, seed and the
model-specific settings. Hybrid (EF_LF) models reuse the settings of their
early and late counterparts. ``LOSS_WEIGHTS`` maps (target, training setting,
model) to the (emotion, sentiment, sarcasm) loss weights; 0.0 means the task is
not used.
"""

from __future__ import annotations

from .backbones import ModelConfig
from .trainer import RunConfig, TaskWeight

TASK_ORDER = ("emotion", "sentiment", "sarcasm")

HYPERPARAMS = {
    "iemocap": {
        "ef_avg": dict(lr=1e-3, batch_size=64, seed=1, hidden_dims=(128,)),
        "lf_avg": dict(lr=1e-3, batch_size=32, seed=3, hidden_dims=(128, 32, 16)),
        "ef_lstm": dict(lr=5e-4, batch_size=128, seed=0, lstm_dim=300, dropout=0.1),
        "lf_lstm": dict(lr=1e-3, batch_size=128, seed=0, late_lstm_dims=(300, 128, 128), dropout=0.1),
        "ef_trans": dict(lr=5e-5, batch_size=64, seed=0, layers=2, heads=5, ff_dim=512, dropout=0.1),
        "lf_trans": dict(lr=1e-4, batch_size=128, seed=0, layers=2, late_heads=(4, 2, 2), late_ff_dims=(300, 128, 64), dropout=0.1),
        "ef_lf_avg": dict(lr=5e-4, batch_size=64, seed=0),
        "ef_lf_lstm": dict(lr=5e-4, batch_size=128, seed=0),
        "ef_lf_trans": dict(lr=1e-4, batch_size=256, seed=1),
    },
    "mosei": {
        "ef_avg": dict(lr=5e-4, batch_size=256, seed=1, hidden_dims=(128,)),
        "lf_avg": dict(lr=5e-4, batch_size=256, seed=0, hidden_dims=(128, 64, 32)),
        "ef_lstm": dict(lr=5e-5, batch_size=32, seed=2, lstm_dim=512, dropout=0.1),
        "lf_lstm": dict(lr=5e-5, batch_size=32, seed=1, late_lstm_dims=(300, 128, 128), dropout=0.1),
        "ef_trans": dict(lr=5e-5, batch_size=32, seed=0, layers=2, heads=5, ff_dim=512, dropout=0.1),
        "lf_trans": dict(lr=5e-5, batch_size=64, seed=0, layers=2, late_heads=(4, 2, 2), late_ff_dims=(300, 128, 64), dropout=0.1),
        "ef_lf_avg": dict(lr=5e-4, batch_size=256, seed=0),
        "ef_lf_lstm": dict(lr=1e-4, batch_size=32, seed=0),
        "ef_lf_trans": dict(lr=5e-5, batch_size=64, seed=1),
    },
}

# SOTA baselines: lr, batch size, seed only (architectures are external)
EXTERNAL_MODELS = {
    "iemocap": {"mfn": (1e-3, 128, 0), "mult": (2e-4, 32, 1), "emo_emb": (5e-4, 64, 0)},
    "mosei": {"mfn": (1e-4, 128, 0), "mult": (1e-4, 32, 1), "emo_emb": (5e-5, 256, 0)},
}

LOSS_WEIGHTS = {
    ("emotion/iemocap", "+sentiment(w)"): {"ef_lf_avg": (1.0, 0.6, 0.0), "ef_lf_lstm": (1.0, 0.8, 0.0), "ef_lf_trans": (1.0, 0.7, 0.0)},
    ("emotion/iemocap", "+sarcasm(w)"): {"ef_lf_avg": (1.0, 0.0, 0.5), "ef_lf_lstm": (1.0, 0.0, 0.6), "ef_lf_trans": (1.0, 0.0, 0.7)},
    ("emotion/iemocap", "all"): {"ef_lf_avg": (1.0, 0.8, 0.3), "ef_lf_lstm": (1.0, 0.7, 0.5), "ef_lf_trans": (1.0, 0.7, 0.3)},
    ("emotion/mosei", "+sentiment(s)"): {"ef_lf_avg": (1.0, 0.4, 0.0), "ef_lf_lstm": (1.0, 1.0, 0.0), "ef_lf_trans": (1.0, 1.0, 0.0)},
    ("emotion/mosei", "+sarcasm(w)"): {"ef_lf_avg": (1.0, 0.0, 0.6), "ef_lf_lstm": (1.0, 0.0, 0.8), "ef_lf_trans": (1.0, 0.0, 0.5)},
    ("emotion/mosei", "all"): {"ef_lf_avg": (1.0, 0.7, 0.5), "ef_lf_lstm": (1.0, 0.8, 0.6), "ef_lf_trans": (1.0, 0.9, 0.4)},
    ("sarcasm/mustard", "+emotion(w)"): {"ef_lf_avg": (0.4, 0.0, 1.0), "ef_lf_lstm": (0.4, 0.0, 1.0), "ef_lf_trans": (1.0, 0.0, 1.0)},
    ("sarcasm/mustard", "+sentiment(w)"): {"ef_lf_avg": (0.0, 1.0, 1.0), "ef_lf_lstm": (0.0, 0.5, 1.0), "ef_lf_trans": (0.0, 0.6, 1.0)},
    ("sarcasm/mustard", "all"): {"ef_lf_avg": (0.4, 1.0, 1.0), "ef_lf_lstm": (0.1, 0.5, 1.0), "ef_lf_trans": (1.0, 0.1, 1.0)},
    ("sentiment/mosei", "+emotion(s)"): {"ef_lf_avg": (0.8, 1.0, 0.0), "ef_lf_lstm": (1.0, 1.0, 0.0), "ef_lf_trans": (0.8, 1.0, 0.0)},
    ("sentiment/mosei", "+emotion(w)"): {"ef_lf_avg": (0.6, 1.0, 0.0), "ef_lf_lstm": (0.6, 1.0, 0.0), "ef_lf_trans": (0.8, 1.0, 0.0)},
    ("sentiment/mosei", "+sarcasm(w)"): {"ef_lf_avg": (0.0, 1.0, 0.6), "ef_lf_lstm": (0.0, 1.0, 0.6), "ef_lf_trans": (0.0, 1.0, 0.2)},
    ("sentiment/mosei", "all(1+2+4)"): {"ef_lf_avg": (0.8, 1.0, 0.8), "ef_lf_lstm": (0.1, 1.0, 0.1), "ef_lf_trans": (0.8, 1.0, 0.2)},
    ("sentiment/mosei", "all(1+3+4)"): {"ef_lf_avg": (1.0, 1.0, 1.0), "ef_lf_lstm": (1.0, 1.0, 0.5), "ef_lf_trans": (1.0, 1.0, 0.5)},
}

_ENCODER = {"avg": "avg", "lstm": "bilstm", "trans": "transformer"}
_FUSION = {"ef": "early", "lf": "late", "ef_lf": "hybrid"}


class UnknownPresetError(KeyError):
    pass


def available_presets() -> list[str]:
    return sorted(f"{ds}/{model}" for ds, models in HYPERPARAMS.items() for model in models)


def _model_settings(dataset: str, model: str) -> dict:
    table = HYPERPARAMS[dataset]
    if model.startswith("ef_lf_"):
        enc = model[len("ef_lf_") :]
        merged = {}
        merged.update({k: v for k, v in table[f"lf_{enc}"].items() if k not in ("lr", "batch_size", "seed")})
        merged.update({k: v for k, v in table[f"ef_{enc}"].items() if k not in ("lr", "batch_size", "seed")})
        merged.update({k: table[model][k] for k in ("lr", "batch_size", "seed")})
        return merged
    return dict(table[model])


def preset(name: str, main_task: str = "emotion") -> RunConfig:
    """Run configuration holding the recorded best settings for ``<dataset>/<model>``."""
    try:
        dataset, model = name.lower().split("/")
        settings = _model_settings(dataset, model)
    except (ValueError, KeyError):
        raise UnknownPresetError(f"unknown preset {name!r}; available: {', '.join(available_presets())}") from None
    run_keys = {k: settings.pop(k) for k in ("lr", "batch_size", "seed")}
    fusion, _, enc = model.rpartition("_")
    model_cfg = ModelConfig(encoder=_ENCODER[enc], fusion=_FUSION[fusion], **settings)
    return RunConfig(model=model_cfg, main_task=main_task, **run_keys)


def loss_weights(target: str, setting: str, model: str) -> tuple[float, float, float]:
    """(emotion, sentiment, sarcasm) loss weights, e.g. ``loss_weights("sarcasm/mustard", "+emotion(w)", "ef_lf_lstm")``."""
    key = (target.lower(), setting.lower().replace(" ", ""))
    try:
        return LOSS_WEIGHTS[key][model.lower()]
    except KeyError:
        raise UnknownPresetError(f"no loss weights for {target!r} / {setting!r} / {model!r}") from None


def mtl_preset(target: str, setting: str, model: str, dataset_preset: str | None = None) -> RunConfig:
    """Combine model hyper-parameters with the loss weights of one multi-task setting.

    Auxiliary provenance follows the setting name: ``(w)`` weak, ``(s)`` strong;
    in the "all" settings a task is weak unless the target dataset has it
    strongly labelled (sentiment and emotion on the MOSEI corpus).
    """
    main_task, corpus = target.lower().split("/")
    weights = loss_weights(target, setting, model)
    corpus_for_hp = dataset_preset or ("mosei" if corpus == "mustard" else corpus)
    base = preset(f"{corpus_for_hp}/{model}", main_task=main_task)
    strong_on = {"iemocap": {"emotion"}, "mosei": {"emotion", "sentiment"}, "mustard": {"sarcasm"}}[corpus]
    setting_l = setting.lower()
    aux = []
    for task, w in zip(TASK_ORDER, weights):
        if task == main_task or w == 0.0:
            continue
        if f"{task}(s)" in setting_l or ("all" in setting_l and task in strong_on and "(1+3+4)" not in setting_l):
            prov = "strong"
        else:
            prov = "weak"
        aux.append(TaskWeight(task, w, prov))
    main_weight = weights[TASK_ORDER.index(main_task)]
    return base.replace(aux_tasks=tuple(aux), main_weight=main_weight)
