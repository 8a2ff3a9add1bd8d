"""Successor-representation network.

    mu_s = [f_frame(frames), f_int(internal)]      state embedding
    mu_a = g(type one-hot, argument one-hot)       action embedding
    phi  = h(mu_s, mu_a)                           state-action feature
    psi  = m(mu_s, mu_a)                           successor feature
    r    = phi . w,   Q = psi . w

The first layer of ``h`` and ``m`` is split into a state part and an action
part, so Q for every action of a state needs one state embedding and one
broadcast add instead of a full forward pass per action.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn import DTYPE, DenseNet, UsageError, glorot, load_checkpoint, save_checkpoint

BRANCHES = ("h", "m")


@dataclass(frozen=True)
class SRConfig:
    hidden: int = 64
    embed: int = 64
    feature_dim: int = 64
    seed: int = 0


@dataclass
class SRPrediction:
    phi: np.ndarray
    psi: np.ndarray
    r_hat: np.ndarray
    q_hat: np.ndarray


class SRNetwork:
    """SR model over flattened observation vectors.

    ``frame_in`` leading entries of an observation vector are the stacked
    frames; the rest is the internal state.
    """

    def __init__(self, frame_in: int, internal_in: int, action_in: int,
                 config: SRConfig | None = None):
        cfg = config or SRConfig()
        self.config = cfg
        self.frame_in, self.internal_in, self.action_in = frame_in, internal_in, action_in
        rng = np.random.default_rng(cfg.seed)
        H, E, d = cfg.hidden, cfg.embed, cfg.feature_dim
        self.enc_frame = DenseNet([frame_in, H, E], relu=(True, True), rng=rng, name="f_frame")
        self.enc_int = DenseNet([internal_in, H, E], relu=(True, True), rng=rng, name="f_int")
        self.enc_act = DenseNet([action_in, H, E], relu=(True, True), rng=rng, name="g")
        self.params: dict[str, np.ndarray] = {}
        for net in (self.enc_frame, self.enc_int, self.enc_act):
            self.params.update(net.params)
        for br in BRANCHES:
            self.params[f"{br}.Ws"] = glorot(rng, 2 * E, H)
            self.params[f"{br}.Wa"] = glorot(rng, E, H)
            self.params[f"{br}.b0"] = np.zeros(H, dtype=DTYPE)
            self.params[f"{br}.W1"] = glorot(rng, H, d)
            self.params[f"{br}.b1"] = np.zeros(d, dtype=DTYPE)
        self.params["w"] = glorot(rng, d, 1)[:, 0].copy()
        self._cache = None

    # --- dims --------------------------------------------------------------
    @property
    def obs_dim(self) -> int:
        return self.frame_in + self.internal_in

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    @property
    def w(self) -> np.ndarray:
        return self.params["w"]

    def _split(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=DTYPE)
        if X.ndim == 1:
            X = X[None]
        if X.shape[-1] != self.obs_dim:
            raise ValueError(f"observation has {X.shape[-1]} entries, net expects {self.obs_dim}")
        return X[:, : self.frame_in], X[:, self.frame_in :]

    def _check_actions(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=DTYPE)
        if A.ndim == 1:
            A = A[None]
        if A.shape[-1] != self.action_in:
            raise ValueError(f"action encoding has {A.shape[-1]} entries, net expects {self.action_in}")
        return A

    # --- inference -----------------------------------------------------------
    def state_embedding(self, X) -> np.ndarray:
        xf, xi = self._split(X)
        return np.concatenate([self.enc_frame.predict(xf), self.enc_int.predict(xi)], axis=-1)

    def action_embedding(self, A) -> np.ndarray:
        return self.enc_act.predict(self._check_actions(A))

    def _branch_all(self, br: str, us: np.ndarray, ua: np.ndarray) -> np.ndarray:
        p = self.params
        z = (us @ p[f"{br}.Ws"])[:, None, :] + (ua @ p[f"{br}.Wa"])[None, :, :] + p[f"{br}.b0"]
        return np.maximum(z, 0.0) @ p[f"{br}.W1"] + p[f"{br}.b1"]

    def predict_all(self, X, A, want_phi: bool = True) -> tuple[np.ndarray | None, np.ndarray]:
        """(phi, psi) of shape (batch, n_actions, d) for every action row of ``A``."""
        us = self.state_embedding(X)
        ua = self.action_embedding(A)
        phi = self._branch_all("h", us, ua) if want_phi else None
        return phi, self._branch_all("m", us, ua)

    def q_all(self, X, A) -> np.ndarray:
        """Q-hat for every (state, action) pair, shape (batch, n_actions)."""
        _, psi = self.predict_all(X, A, want_phi=False)
        return psi @ self.params["w"]

    def r_all(self, X, A) -> np.ndarray:
        us = self.state_embedding(X)
        ua = self.action_embedding(A)
        return self._branch_all("h", us, ua) @ self.params["w"]

    def predict(self, X, A) -> SRPrediction:
        """Paired prediction without caching (row k of X with row k of A)."""
        return self._pairs(X, A, cache=False)

    # --- training ------------------------------------------------------------
    def _pairs(self, X, A, cache: bool) -> SRPrediction:
        xf, xi = self._split(X)
        A = self._check_actions(A)
        if len(A) != len(xf):
            raise ValueError("need one action row per observation row")
        if cache:
            ef, ei, ua = self.enc_frame.forward(xf), self.enc_int.forward(xi), self.enc_act.forward(A)
        else:
            ef, ei, ua = self.enc_frame.predict(xf), self.enc_int.predict(xi), self.enc_act.predict(A)
        us = np.concatenate([ef, ei], axis=-1)
        p = self.params
        out, store = {}, {}
        for br in BRANCHES:
            z = us @ p[f"{br}.Ws"] + ua @ p[f"{br}.Wa"] + p[f"{br}.b0"]
            a = np.maximum(z, 0.0)
            out[br] = a @ p[f"{br}.W1"] + p[f"{br}.b1"]
            store[br] = (z, a)
        if cache:
            self._cache = (us, ua, store, out["h"], out["m"])
        w = p["w"]
        return SRPrediction(out["h"], out["m"], out["h"] @ w, out["m"] @ w)

    def forward(self, X, A) -> SRPrediction:
        """Paired prediction, caching activations for :meth:`backward`."""
        return self._pairs(X, A, cache=True)

    def backward(self, d_r=None, d_q=None, d_phi=None, d_psi=None) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss given its partials w.r.t. r, Q, phi, psi.

        Only parameters the supplied partials actually reach get an entry,
        so an optimizer step leaves untouched branches exactly as they were.
        """
        if self._cache is None:
            raise UsageError("backward() called before forward()")
        us, ua, store, phi, psi = self._cache
        p = self.params
        w = p["w"]
        grads: dict[str, np.ndarray] = {}
        up = {"h": None, "m": None}
        if d_r is not None:
            up["h"] = np.asarray(d_r, DTYPE)[:, None] * w
            grads["w"] = np.asarray(d_r, DTYPE) @ phi
        if d_phi is not None:
            up["h"] = d_phi if up["h"] is None else up["h"] + d_phi
        if d_q is not None:
            up["m"] = np.asarray(d_q, DTYPE)[:, None] * w
            gw = np.asarray(d_q, DTYPE) @ psi
            grads["w"] = gw if "w" not in grads else grads["w"] + gw
        if d_psi is not None:
            up["m"] = d_psi if up["m"] is None else up["m"] + d_psi
        d_us = np.zeros_like(us)
        d_ua = np.zeros_like(ua)
        for br in BRANCHES:
            g = up[br]
            if g is None:
                continue
            z, a = store[br]
            grads[f"{br}.W1"] = a.T @ g
            grads[f"{br}.b1"] = g.sum(axis=0)
            dz = (g @ p[f"{br}.W1"].T) * (z > 0)
            grads[f"{br}.Ws"] = us.T @ dz
            grads[f"{br}.Wa"] = ua.T @ dz
            grads[f"{br}.b0"] = dz.sum(axis=0)
            d_us += dz @ p[f"{br}.Ws"].T
            d_ua += dz @ p[f"{br}.Wa"].T
        if up["h"] is None and up["m"] is None:
            return grads
        E = self.config.embed
        grads.update(self.enc_frame.backward(d_us[:, :E])[1])
        grads.update(self.enc_int.backward(d_us[:, E:])[1])
        grads.update(self.enc_act.backward(d_ua)[1])
        return grads

    # --- bookkeeping ---------------------------------------------------------
    def copy(self) -> "SRNetwork":
        new = SRNetwork.__new__(SRNetwork)
        new.config = self.config
        new.frame_in, new.internal_in, new.action_in = self.frame_in, self.internal_in, self.action_in
        for name in ("enc_frame", "enc_int", "enc_act"):
            src = getattr(self, name)
            net = DenseNet.__new__(DenseNet)
            net.sizes, net.relu, net.prefix, net._cache = src.sizes, src.relu, src.prefix, None
            setattr(new, name, net)
        new.params = {k: v.copy() for k, v in self.params.items()}
        for net in (new.enc_frame, new.enc_int, new.enc_act):
            net.params = {k: new.params[k] for k in self.params if k.startswith(net.prefix)}
        new._cache = None
        return new

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        """Copy values in place (keeps sub-net views valid)."""
        for k, v in params.items():
            if self.params[k].shape != v.shape:
                raise ValueError(f"shape mismatch for {k}")
            self.params[k][...] = v

    def meta(self) -> dict:
        return {
            "kind": "sr-network",
            "frame_in": self.frame_in,
            "internal_in": self.internal_in,
            "action_in": self.action_in,
            "config": asdict(self.config),
            "init": "glorot-uniform",
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "SRNetwork":
        return cls(meta["frame_in"], meta["internal_in"], meta["action_in"],
                   SRConfig(**meta["config"]))

    def save(self, path: "str | Path", extra_arrays: dict | None = None, extra_meta: dict | None = None):
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update(extra_arrays or {})
        save_checkpoint(path, arrays, {"model": self.meta(), **(extra_meta or {})})

    @classmethod
    def load(cls, path: "str | Path") -> tuple["SRNetwork", dict[str, np.ndarray], dict]:
        arrays, meta = load_checkpoint(path)
        net = cls.from_meta(meta["model"])
        net.load_params({k[6:]: v for k, v in arrays.items() if k.startswith("param/")})
        rest = {k: v for k, v in arrays.items() if not k.startswith("param/")}
        return net, rest, meta


def sr_forward(net: SRNetwork, obs_vector, action_encoding) -> SRPrediction:
    """Prediction for one observation and one encoded action."""
    pred = net.predict(np.asarray(obs_vector)[None], np.asarray(action_encoding)[None])
    return SRPrediction(pred.phi[0], pred.psi[0], float(pred.r_hat[0]), float(pred.q_hat[0]))


def best_action(net, obs_vector, candidates: Sequence[int], action_table: np.ndarray) -> int:
    """Candidate id with the highest Q-hat; ties go to the lowest id."""
    cands = sorted(int(c) for c in candidates)
    if not cands:
        raise ValueError("best_action needs at least one candidate")
    q = net.q_all(np.asarray(obs_vector)[None], action_table[cands])[0]
    return cands[int(np.argmax(q))]


def epsilon_greedy(net, obs_vector, candidates: Sequence[int], epsilon: float,
                   rng: np.random.Generator, action_table: np.ndarray) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    cands = sorted(int(c) for c in candidates)
    if not cands:
        raise ValueError("epsilon_greedy needs at least one candidate")
    if rng.random() < epsilon:
        return cands[int(rng.integers(len(cands)))]
    return best_action(net, obs_vector, cands, action_table)
