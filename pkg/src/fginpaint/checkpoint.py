"""Checkpoint archive: named float arrays plus a JSON header, in one ``.npz``.

Layout::

    __header__              JSON {format, gspec, cspec, seed, step, epoch, optim}
    generator/<name>        generator state_dict entries
    critic/<name>           critic state_dict entries
    opt_g/<i>/<key>         Adam state for generator parameter i
    opt_d/<i>/<key>         Adam state for critic parameter i
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .nets import CriticSpec, GeneratorSpec, NetParams, init_params, spec_dict

FORMAT = "fginpaint-ckpt-1"


class CheckpointError(RuntimeError):
    pass


def _optim_arrays(prefix: str, opt: torch.optim.Optimizer | None, arrays: dict) -> dict | None:
    if opt is None:
        return None
    sd = opt.state_dict()
    for idx, st in sd["state"].items():
        for key, val in st.items():
            arrays[f"{prefix}/{idx}/{key}"] = torch.as_tensor(val).detach().cpu().numpy()
    return {"param_groups": sd["param_groups"]}


def save_checkpoint(path, params: NetParams, step: int = 0, epoch: int = 0,
                    opt_g=None, opt_d=None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {k: v.detach().cpu().numpy() for k, v in params.named_arrays().items()}
    header = {
        "format": FORMAT,
        "gspec": spec_dict(params.gspec),
        "cspec": spec_dict(params.cspec),
        "seed": params.seed,
        "step": int(step),
        "epoch": int(epoch),
        "optim": {"opt_g": _optim_arrays("opt_g", opt_g, arrays),
                  "opt_d": _optim_arrays("opt_d", opt_d, arrays)},
        "extra": extra or {},
    }
    arrays["__header__"] = np.array(json.dumps(header))
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)
    return path


def read_header(path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return json.loads(str(z["__header__"]))


def _load_optim(opt, prefix: str, meta: dict | None, z) -> None:
    if opt is None or meta is None:
        return
    state: dict[int, dict] = {}
    for key in z.files:
        if key.startswith(prefix + "/"):
            _, idx, name = key.split("/", 2)
            state.setdefault(int(idx), {})[name] = torch.from_numpy(z[key].copy())
    groups = opt.state_dict()["param_groups"]
    saved = meta["param_groups"]
    if len(saved) != len(groups) or any(len(a["params"]) != len(b["params"]) for a, b in zip(saved, groups)):
        raise CheckpointError(f"{prefix}: optimizer layout does not match the checkpoint")
    # keep current hyperparameters (lr etc. come from the run config)
    opt.load_state_dict({"state": state, "param_groups": groups})


def load_checkpoint(path, gspec: GeneratorSpec | None = None, cspec: CriticSpec | None = None,
                    opt_factory=None):
    """Rebuild NetParams (and optionally optimizers) from an archive.

    If ``gspec``/``cspec`` are given they must equal the stored ones.
    ``opt_factory(params) -> (opt_g, opt_d)`` creates optimizers whose state
    is then restored.  Returns ``(params, header, opt_g, opt_d)``.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no checkpoint at {path}")
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["__header__"]))
        if header.get("format") != FORMAT:
            raise CheckpointError(f"{path}: unknown checkpoint format {header.get('format')!r}")
        stored_g = GeneratorSpec(**header["gspec"])
        stored_c = CriticSpec(**header["cspec"])
        for name, want, have in (("generator", gspec, stored_g), ("critic", cspec, stored_c)):
            if want is not None and want != have:
                raise CheckpointError(f"{path}: {name} spec mismatch: config {want} vs checkpoint {have}")
        params = init_params(header["seed"], stored_g, stored_c)
        for prefix, module in (("generator", params.generator), ("critic", params.critic)):
            sd = {k.split("/", 1)[1]: torch.from_numpy(z[k].copy())
                  for k in z.files if k.startswith(prefix + "/")}
            try:
                module.load_state_dict(sd)
            except RuntimeError as exc:
                raise CheckpointError(f"{path}: {prefix} weights do not fit: {exc}") from exc
        opt_g = opt_d = None
        if opt_factory is not None:
            opt_g, opt_d = opt_factory(params)
            _load_optim(opt_g, "opt_g", header["optim"]["opt_g"], z)
            _load_optim(opt_d, "opt_d", header["optim"]["opt_d"], z)
    return params, header, opt_g, opt_d
