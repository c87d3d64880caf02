"""Graph-convolutional LSTM autoencoder for 20-frame pose sequences.

Encoder: each frame's 17 x 3 joint matrix passes through two graph
convolutions over the skeleton (ReLU after each), is flattened, and
feeds an LSTM frame 1 through frame 20. The final hidden state is the
latent vector; the final cell state rides along to seed the decoder.

Decoder: a second LSTM starts from the encoder's final (h, c), consumes
a zero frame followed by the encoder features of frames 20 down to 2
(teacher forcing), and each output is projected back onto the skeleton,
mixed by one graph convolution, and mapped to coordinates by a
node-wise linear readout. The readout skips the adjacency and the ReLU:
the normalized skeleton adjacency is singular, so smoothing the final
layer would make some joint configurations (and negative coordinates)
unreachable. Output step s reconstructs frame 20 - s; the sequence is
returned in temporal order.

Training minimizes mean squared error between reconstructed and input
poses with Adam. All randomness flows through the seed in the config.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointVersionError, ContractError, TrainingDivergedError
from .joints import NUM_JOINTS, get_joint_map
from .kinematics import normalize
from .optim import Adam

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class AutoencoderConfig:
    gcn_hidden: int = 32
    gcn_out: int = 16
    lstm_hidden: int = 128
    seq_len: int = 20
    joints: int = NUM_JOINTS
    coords: int = 3
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int | None = None    # None trains on the full dataset per step
    seed: int = 0

    @property
    def latent_dim(self) -> int:
        return self.lstm_hidden

    @property
    def feature_dim(self) -> int:
        return self.joints * self.gcn_out

    def validate(self) -> None:
        for name in ("gcn_hidden", "gcn_out", "lstm_hidden", "seq_len", "joints", "coords"):
            if getattr(self, name) <= 0:
                raise ContractError(f"config.{name} must be positive")
        if self.epochs < 0 or self.learning_rate <= 0:
            raise ContractError("epochs must be >= 0 and learning_rate positive")
        if self.batch_size is not None and self.batch_size <= 0:
            raise ContractError("batch_size must be positive when given")


@dataclass(frozen=True)
class SkeletonAdjacency:
    """Fixed, symmetrically normalized adjacency with self-loops."""

    matrix: np.ndarray
    edges: tuple[tuple[int, int], ...]


def build_adjacency(edges, num_nodes: int = NUM_JOINTS) -> SkeletonAdjacency:
    """Normalize the skeleton graph: D^{-1/2} (A + I) D^{-1/2}."""
    a = np.eye(num_nodes)
    normalized_edges = []
    for raw_a, raw_b in edges:
        i, j = int(raw_a), int(raw_b)
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise ContractError(f"edge ({i}, {j}) references a node outside 0..{num_nodes - 1}")
        a[i, j] = 1.0
        a[j, i] = 1.0
        normalized_edges.append((i, j))
    degree = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    matrix = inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return SkeletonAdjacency(matrix=matrix, edges=tuple(normalized_edges))


def gcn_layer(x: Tensor, weight: Tensor, adjacency: Tensor, activate: bool = True) -> Tensor:
    """One graph convolution: optionally ReLU(A_hat . X . W)."""
    out = ad.matmul(ad.matmul(adjacency, x), weight)
    return ad.relu(out) if activate else out


@dataclass
class LatentVector:
    values: np.ndarray
    clip_id: str | None = None


@dataclass
class EncoderState:
    """Final hidden and cell state of the encoder for one sequence."""

    hidden: np.ndarray
    cell: np.ndarray


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class PoseAutoencoder:
    """Parameter container plus the forward passes built on the autodiff core."""

    def __init__(self, config: AutoencoderConfig, adjacency: SkeletonAdjacency,
                 params: dict[str, np.ndarray] | None = None):
        config.validate()
        if adjacency.matrix.shape != (config.joints, config.joints):
            raise ContractError(
                f"adjacency {adjacency.matrix.shape} does not match {config.joints} joints")
        self.config = config
        self.adjacency = adjacency
        self._a_hat = Tensor(adjacency.matrix, requires_grad=False)
        if params is None:
            params = self._init_params(np.random.default_rng(config.seed))
        self.params = {name: Tensor(arr, requires_grad=True) for name, arr in params.items()}
        self._check_shapes()

    def _init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        c = self.config
        h, d = c.lstm_hidden, c.feature_dim
        return {
            "enc_gcn1": _uniform(rng, (c.coords, c.gcn_hidden), c.coords),
            "enc_gcn2": _uniform(rng, (c.gcn_hidden, c.gcn_out), c.gcn_hidden),
            "enc_w_ih": _uniform(rng, (4 * h, d), d),
            "enc_w_hh": _uniform(rng, (4 * h, h), h),
            "enc_bias": np.zeros((4 * h, 1)),
            "dec_w_ih": _uniform(rng, (4 * h, d), d),
            "dec_w_hh": _uniform(rng, (4 * h, h), h),
            "dec_bias": np.zeros((4 * h, 1)),
            "dec_proj_w": _uniform(rng, (d, h), h),
            "dec_proj_b": np.zeros((d, 1)),
            "dec_gcn1": _uniform(rng, (c.gcn_out, c.gcn_hidden), c.gcn_out),
            "dec_readout": _uniform(rng, (c.gcn_hidden, c.coords), c.gcn_hidden),
        }

    def _expected_shapes(self) -> dict[str, tuple[int, ...]]:
        c = self.config
        h, d = c.lstm_hidden, c.feature_dim
        return {
            "enc_gcn1": (c.coords, c.gcn_hidden),
            "enc_gcn2": (c.gcn_hidden, c.gcn_out),
            "enc_w_ih": (4 * h, d),
            "enc_w_hh": (4 * h, h),
            "enc_bias": (4 * h, 1),
            "dec_w_ih": (4 * h, d),
            "dec_w_hh": (4 * h, h),
            "dec_bias": (4 * h, 1),
            "dec_proj_w": (d, h),
            "dec_proj_b": (d, 1),
            "dec_gcn1": (c.gcn_out, c.gcn_hidden),
            "dec_readout": (c.gcn_hidden, c.coords),
        }

    def _check_shapes(self) -> None:
        expected = self._expected_shapes()
        if set(self.params) != set(expected):
            raise CheckpointVersionError(
                f"parameter names {sorted(self.params)} do not match the model layout")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise CheckpointVersionError(
                    f"parameter '{name}' has shape {self.params[name].shape}, expected {shape}")

    def parameter_list(self) -> list[Tensor]:
        return [self.params[name] for name in sorted(self.params)]

    # -- forward passes ------------------------------------------------

    def _frame_features(self, seq: np.ndarray) -> list[Tensor]:
        """Per-frame flattened spatial features, shape (joints*gcn_out, 1)."""
        c = self.config
        feats = []
        for frame in seq:
            x = Tensor(frame, requires_grad=False)
            g1 = gcn_layer(x, self.params["enc_gcn1"], self._a_hat)
            g2 = gcn_layer(g1, self.params["enc_gcn2"], self._a_hat)
            feats.append(ad.reshape(g2, (c.feature_dim, 1)))
        return feats

    def _lstm_step(self, prefix: str, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        n = self.config.lstm_hidden
        z = ad.add(ad.add(ad.matmul(self.params[f"{prefix}_w_ih"], x),
                          ad.matmul(self.params[f"{prefix}_w_hh"], h)),
                   self.params[f"{prefix}_bias"])
        i = ad.sigmoid(ad.rows(z, 0, n))
        f = ad.sigmoid(ad.rows(z, n, 2 * n))
        g = ad.tanh(ad.rows(z, 2 * n, 3 * n))
        o = ad.sigmoid(ad.rows(z, 3 * n, 4 * n))
        c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_next = ad.mul(o, ad.tanh(c_next))
        return h_next, c_next

    def _encode_graph(self, feats_per_seq: list[list[Tensor]]) -> tuple[Tensor, Tensor, list[Tensor]]:
        """Run the encoder over a batch; returns (h_T, c_T, per-step inputs)."""
        c = self.config
        batch = len(feats_per_seq)
        xs = [ad.concat_cols([feats_per_seq[b][t] for b in range(batch)])
              for t in range(c.seq_len)]
        h = Tensor(np.zeros((c.lstm_hidden, batch)), requires_grad=False)
        cell = Tensor(np.zeros((c.lstm_hidden, batch)), requires_grad=False)
        for x in xs:
            h, cell = self._lstm_step("enc", x, h, cell)
        return h, cell, xs

    def _decode_graph(self, h: Tensor, cell: Tensor, xs: list[Tensor],
                      batch: int) -> list[list[Tensor]]:
        """Teacher-forced decoder; outputs[s][b] reconstructs frame seq_len-1-s."""
        c = self.config
        zero = Tensor(np.zeros((c.feature_dim, batch)), requires_grad=False)
        outputs: list[list[Tensor]] = []
        for s in range(c.seq_len):
            u = zero if s == 0 else xs[c.seq_len - s]
            h, cell = self._lstm_step("dec", u, h, cell)
            proj = ad.add(ad.matmul(self.params["dec_proj_w"], h), self.params["dec_proj_b"])
            frame_out = []
            for b in range(batch):
                node_feats = ad.reshape(ad.col(proj, b), (c.joints, c.gcn_out))
                d1 = gcn_layer(node_feats, self.params["dec_gcn1"], self._a_hat)
                d2 = ad.matmul(d1, self.params["dec_readout"])
                frame_out.append(d2)
            outputs.append(frame_out)
        return outputs

    def _batch_loss(self, sequences: list[np.ndarray]) -> Tensor:
        c = self.config
        feats = [self._frame_features(seq) for seq in sequences]
        h, cell, xs = self._encode_graph(feats)
        outputs = self._decode_graph(h, cell, xs, len(sequences))
        terms = []
        for s in range(c.seq_len):
            target_idx = c.seq_len - 1 - s
            for b, seq in enumerate(sequences):
                terms.append(ad.mse_loss(outputs[s][b], Tensor(seq[target_idx])))
        total = terms[0]
        for term in terms[1:]:
            total = ad.add(total, term)
        return ad.mul(total, 1.0 / len(terms))

    def _check_sequence(self, seq: np.ndarray) -> np.ndarray:
        seq = np.asarray(seq, dtype=np.float64)
        expected = (self.config.seq_len, self.config.joints, self.config.coords)
        if seq.shape != expected:
            raise ContractError(f"sequence shape {seq.shape} does not match {expected}")
        return seq


def encode_states(model: PoseAutoencoder, seq: np.ndarray) -> EncoderState:
    """Final encoder (hidden, cell) pair for one normalized sequence."""
    seq = model._check_sequence(seq)
    h, cell, _ = model._encode_graph([model._frame_features(seq)])
    return EncoderState(hidden=h.data[:, 0].copy(), cell=cell.data[:, 0].copy())


def encode(model: PoseAutoencoder, seq: np.ndarray, clip_id: str | None = None) -> LatentVector:
    """Embed one normalized sequence; the latent is the final hidden state."""
    return LatentVector(values=encode_states(model, seq).hidden, clip_id=clip_id)


def decode(model: PoseAutoencoder, state: EncoderState, seq: np.ndarray) -> np.ndarray:
    """Teacher-forced reconstruction of `seq` from an encoder state.

    Returns a (seq_len, joints, coords) array in temporal order.
    """
    seq = model._check_sequence(seq)
    feats = model._frame_features(seq)
    xs = [feats[t] for t in range(model.config.seq_len)]
    h = Tensor(np.asarray(state.hidden, dtype=np.float64).reshape(-1, 1), requires_grad=False)
    cell = Tensor(np.asarray(state.cell, dtype=np.float64).reshape(-1, 1), requires_grad=False)
    if h.shape[0] != model.config.lstm_hidden:
        raise ContractError(
            f"latent length {h.shape[0]} does not match lstm_hidden {model.config.lstm_hidden}")
    outputs = model._decode_graph(h, cell, xs, batch=1)
    recon = np.zeros((model.config.seq_len, model.config.joints, model.config.coords))
    for s in range(model.config.seq_len):
        recon[model.config.seq_len - 1 - s] = outputs[s][0].data
    return recon


def reconstruct(model: PoseAutoencoder, seq: np.ndarray) -> np.ndarray:
    """Encode then decode one sequence."""
    return decode(model, encode_states(model, seq), seq)


@dataclass
class TrainResult:
    model: PoseAutoencoder
    loss_history: list[float] = field(default_factory=list)


def train(sequences: list[np.ndarray], config: AutoencoderConfig,
          adjacency: SkeletonAdjacency | None = None,
          joint_map_id: str = "h36m_17") -> TrainResult:
    """Fit the autoencoder on normalized sequences; returns per-epoch losses."""
    config.validate()
    if not sequences:
        raise ContractError("train needs at least one sequence")
    if adjacency is None:
        adjacency = build_adjacency(get_joint_map(joint_map_id).edges)
    model = PoseAutoencoder(config, adjacency)
    seqs = [model._check_sequence(s) for s in sequences]

    opt = Adam(model.parameter_list(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed + 1)  # batch shuffling, separate stream
    n = len(seqs)
    batch_size = config.batch_size if config.batch_size is not None else n
    batch_size = min(batch_size, n)

    history: list[float] = []
    for epoch in range(config.epochs):
        if batch_size >= n:
            order = np.arange(n)
        else:
            order = rng.permutation(n)
        epoch_losses = []
        for step, start in enumerate(range(0, n, batch_size)):
            batch = [seqs[i] for i in order[start:start + batch_size]]
            loss = model._batch_loss(batch)
            if not np.isfinite(loss.data):
                raise TrainingDivergedError(epoch=epoch, step=step)
            ad.backward(loss)
            opt.step()
            opt.zero_grad()
            epoch_losses.append(loss.item())
        history.append(float(np.mean(epoch_losses)))
    return TrainResult(model=model, loss_history=history)


def embed_dataset(model: PoseAutoencoder, dataset, joint_map_id: str | None = None) -> list[LatentVector]:
    """One latent per clip, ordered by clip_id; clips without 3D poses are skipped."""
    latents = []
    for clip in sorted(dataset.clips, key=lambda c: c.clip_id):
        if clip.pose3d_seq is None:
            log.warning("clip %s has no 3D poses; skipping", clip.clip_id)
            continue
        normalized = normalize(clip.pose3d_seq, joint_map_id or clip.joint_map_id)
        latents.append(encode(model, normalized.coords, clip_id=clip.clip_id))
    return latents


def save_checkpoint(model: PoseAutoencoder, path: str | Path) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "num_nodes": model.config.joints,
        "adjacency_edges": [list(e) for e in model.adjacency.edges],
        "params": {name: t.data.tolist() for name, t in model.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> PoseAutoencoder:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format_version {version!r} is not supported "
            f"(expected {CHECKPOINT_VERSION})")
    try:
        config = AutoencoderConfig(**doc["config"])
        adjacency = build_adjacency(doc["adjacency_edges"], num_nodes=doc["num_nodes"])
        params = {name: np.asarray(values, dtype=np.float64)
                  for name, values in doc["params"].items()}
    except (KeyError, TypeError) as exc:
        raise CheckpointVersionError(f"malformed checkpoint: {exc}") from exc
    return PoseAutoencoder(config, adjacency, params=params)
