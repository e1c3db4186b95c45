"""Material identification network with environment-adversarial training.

A 1-D convolutional trunk turns a dual-polarization sequence pair into a
fixed 15,360-wide feature vector; a material classifier and an environment
discriminator share that trunk. The discriminator trains through a gradient
reversal layer so the trunk learns features that identify the material while
carrying as little environment information as possible. Conflicting gradients
on the trunk (classification vs. adversarial branch) are reconciled by
projecting each onto the other's normal plane.
"""

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

SEQUENCE_LENGTH = 1120
PADDED_LENGTH = 1280  # next length that stride-2 halving maps onto the feature width
FEATURE_DIM = 15360


@dataclass
class MNetConfig:
    channels: tuple = (24, 48, 96, 192)  # doubling widths; 192 * 80 = 15,360
    kernel: int = 3
    stride: int = 2
    classifier_hidden: tuple = (512, 128)
    # three FC layers like the classifier, but narrow: an over-parameterized
    # discriminator memorizes its few samples per environment and feeds the
    # trunk noise gradients through the reversal layer
    discriminator_hidden: tuple = (128, 64)
    n_classes: int = 4
    n_environments: int = 2
    lam: float = 1.0
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0


class _GradientReversal(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, lam):
        ctx.lam = lam
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad):
        return -ctx.lam * grad, None


def grl(x: torch.Tensor, lam: float = 1.0) -> torch.Tensor:
    """Identity in the forward pass; multiplies the gradient by -lam backward."""
    return _GradientReversal.apply(x, lam)


class FeatureExtractor(nn.Module):
    """Trunk G_f: four stride-2 conv blocks over the padded sequence pair.

    The 1120-sample input is zero-padded symmetrically to 1280 so four
    halvings land on length 80; with the final width of 192 channels the
    flattened feature vector is exactly 15,360 wide.
    """

    def __init__(self, cfg: MNetConfig):
        super().__init__()
        self.cfg = cfg
        convs, norms = [], []
        in_ch = 2
        for out_ch in cfg.channels:
            convs.append(nn.Conv1d(in_ch, out_ch, cfg.kernel, stride=cfg.stride, padding=1))
            # batch-independent normalization keeps the adversarial branch
            # honest (the trunk cannot fool the discriminator by rescaling
            # activations) and avoids stale running statistics while the
            # reversed gradient keeps shifting the feature distribution
            norms.append(nn.GroupNorm(1, out_ch))
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(norms)

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != 2 or x.shape[2] != SEQUENCE_LENGTH:
            raise ValueError(f"expected input of shape (batch, 2, {SEQUENCE_LENGTH})")
        pad = (PADDED_LENGTH - SEQUENCE_LENGTH) // 2
        h = F.pad(x, (pad, pad))
        for conv, norm in zip(self.convs, self.norms):
            h = F.relu(norm(conv(h)))
        out = h.flatten(1)
        assert out.shape[1] == FEATURE_DIM
        return out


def _mlp(widths):
    layers = []
    for i in range(len(widths) - 1):
        layers.append(nn.Linear(widths[i], widths[i + 1]))
        if i < len(widths) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class MNet(nn.Module):
    def __init__(self, cfg: MNetConfig = MNetConfig()):
        super().__init__()
        self.cfg = cfg
        self.feature_extractor = FeatureExtractor(cfg)
        self.classifier = _mlp((FEATURE_DIM, *cfg.classifier_hidden, cfg.n_classes))
        self.discriminator = _mlp((FEATURE_DIM, *cfg.discriminator_hidden, cfg.n_environments))
        for m in self.modules():
            if isinstance(m, (nn.Conv1d, nn.Linear)):
                nn.init.xavier_uniform_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        return self.classifier(self.feature_extractor(x))

    def losses(self, x, y, e, lam: float | None = None):
        """(objective, classifier CE, discriminator CE) for one batch.

        The objective is L_c - lam * L_d, the quantity the trunk and
        classifier minimize and the discriminator maximizes; at lam=0 it is
        bit-identical to the plain cross-entropy baseline.
        """
        lam = self.cfg.lam if lam is None else lam
        features = self.feature_extractor(x)
        loss_c = F.cross_entropy(self.classifier(features), y)
        loss_d = F.cross_entropy(self.discriminator(features), e)
        return loss_c - lam * loss_d, loss_c, loss_d

    @torch.no_grad()
    def classify(self, sample: torch.Tensor):
        """(predicted class index, probability vector) for one sequence pair."""
        self.eval()
        if sample.ndim == 2:
            sample = sample.unsqueeze(0)
        logits = self.forward(sample)
        probs = F.softmax(logits, dim=1)[0]
        return int(torch.argmax(probs)), probs


def project_conflicting(g_a: torch.Tensor, g_b: torch.Tensor):
    """Project each gradient onto the other's normal plane when they conflict.

    No-op for non-negative inner products and for degenerate (underflowed)
    gradients; the projected vectors never have a larger norm than the
    originals.
    """
    dot = torch.dot(g_a, g_b)
    if dot >= 0:
        return g_a, g_b
    norm_a = torch.dot(g_a, g_a)
    norm_b = torch.dot(g_b, g_b)
    # a saturated loss yields an (effectively) zero gradient whose norm can
    # underflow to 0.0 while the dot product keeps a denormal sign bit
    if float(norm_a) < 1e-30 or float(norm_b) < 1e-30:
        return g_a, g_b
    a = g_a - dot / norm_b * g_b
    b = g_b - dot / norm_a * g_a
    return a, b


def _flat_grads(params):
    return torch.cat([
        p.grad.detach().flatten() if p.grad is not None else torch.zeros(p.numel())
        for p in params
    ])


def _write_flat_grads(params, flat):
    offset = 0
    for p in params:
        n = p.numel()
        p.grad = flat[offset : offset + n].view_as(p).clone()
        offset += n


def train_adversarial(
    model: MNet,
    dataset,
    cfg: MNetConfig | None = None,
    adversarial: bool = True,
    val_set=None,
    warmup_fraction: float = 0.3,
):
    """Joint training of trunk, classifier and discriminator.

    The discriminator branch backpropagates through the gradient reversal
    layer; the two gradient contributions arriving at the trunk (from the
    classification loss and from the reversed discriminator loss) are
    de-conflicted with pairwise projection before the optimizer step. The
    reversal strength ramps from 0 to cfg.lam after a classifier-only warmup,
    which keeps the min-max game from collapsing the trunk early; when a
    validation set is given, the best-accuracy epoch's weights are restored
    at the end. With a single training environment the adversarial branch is
    disabled and training falls back to plain cross-entropy.
    """
    cfg = cfg or model.cfg
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    envs = {int(e) for _, _, e in (dataset[i] for i in range(len(dataset)))}
    if adversarial and len(envs) < 2:
        warnings.warn("single-environment training set; adversarial branch disabled")
        adversarial = False

    torch.manual_seed(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    loader = torch.utils.data.DataLoader(
        dataset, batch_size=cfg.batch_size, shuffle=True, generator=generator
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    trunk_params = list(model.feature_extractor.parameters())
    warmup_steps = int(warmup_fraction * cfg.epochs) * max(len(loader), 1)
    ramp_steps = max(cfg.epochs * max(len(loader), 1) - warmup_steps, 1)

    history = {"loss_c": [], "loss_d": [], "val_accuracy": []}
    best_acc = -1.0
    best_state = None
    step = 0
    for _ in range(cfg.epochs):
        model.train()
        sum_c = sum_d = 0.0
        count = 0
        for x, y, e in loader:
            optimizer.zero_grad()
            features = model.feature_extractor(x)
            loss_c = F.cross_entropy(model.classifier(features), y)
            progress = max(step - warmup_steps, 0) / ramp_steps
            lam = cfg.lam * (2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0)
            if adversarial and lam > 0.0:
                loss_d = F.cross_entropy(
                    model.discriminator(grl(features, lam)), e
                )
                loss_c.backward(retain_graph=True)
                g_cls = _flat_grads(trunk_params)
                for p in trunk_params:
                    p.grad = None
                loss_d.backward()
                g_adv = _flat_grads(trunk_params)
                g_cls, g_adv = project_conflicting(g_cls, g_adv)
                _write_flat_grads(trunk_params, g_cls + g_adv)
                sum_d += float(loss_d.detach()) * x.shape[0]
            else:
                loss_c.backward()
            # reversed-gradient runaway guard: without it the trunk can scale
            # features unboundedly once the classifier saturates
            nn.utils.clip_grad_norm_(model.parameters(), 5.0)
            optimizer.step()
            sum_c += float(loss_c.detach()) * x.shape[0]
            count += x.shape[0]
            step += 1
        history["loss_c"].append(sum_c / count)
        history["loss_d"].append(sum_d / count if adversarial else None)
        if val_set is not None and len(val_set) > 0:
            acc = evaluate_accuracy(model, val_set)
            history["val_accuracy"].append(acc)
            if acc > best_acc:
                best_acc = acc
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    if best_state is not None:
        model.load_state_dict(best_state)
    return history


@torch.no_grad()
def evaluate_accuracy(model: MNet, dataset, batch_size: int = 256) -> float:
    model.eval()
    loader = torch.utils.data.DataLoader(dataset, batch_size=batch_size, shuffle=False)
    correct = 0
    total = 0
    for x, y, _ in loader:
        pred = torch.argmax(model(x), dim=1)
        correct += int((pred == y).sum())
        total += y.shape[0]
    return correct / total


@torch.no_grad()
def confusion_matrix(model: MNet, dataset, n_classes: int = 4):
    model.eval()
    loader = torch.utils.data.DataLoader(dataset, batch_size=256, shuffle=False)
    matrix = torch.zeros(n_classes, n_classes, dtype=torch.long)
    for x, y, _ in loader:
        pred = torch.argmax(model(x), dim=1)
        for t, p in zip(y, pred):
            matrix[int(t), int(p)] += 1
    return matrix


def save_confusion_json(matrix: torch.Tensor, labels, path):
    payload = {"labels": list(labels), "matrix": matrix.tolist()}
    Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
