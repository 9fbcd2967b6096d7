"""A small deterministic character-level GRU language model.

The service needs a real neural model whose next-token distributions are
reproducible run after run: seeded init, seeded single-threaded training
on a built-in corpus, and strictly sequential state updates.  Quality is
beside the point; the quantization layer upstream is what makes the
outputs wire-stable.
"""

from __future__ import annotations

import hashlib
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

VOCAB_SIZE = 256

_BUILTIN_CORPUS = (
    "the gateway serves next token probabilities over a small wire protocol. "
    "each session walks one token stream and keeps its own recurrent state. "
    "probabilities are quantized to integers before they ever leave the "
    "server, so two machines reading the same stream agree bit for bit. "
    "text compresses well when the model expects what actually arrives, "
    "and poorly when every byte comes as a surprise. blocks reset the "
    "interval so small disagreements stay local instead of spreading. "
) * 6


class CharGRU(nn.Module):
    def __init__(self, embed_dim: int = 32, hidden_dim: int = 96):
        super().__init__()
        self.embed = nn.Embedding(VOCAB_SIZE, embed_dim)
        self.gru = nn.GRU(embed_dim, hidden_dim, batch_first=True)
        self.head = nn.Linear(hidden_dim, VOCAB_SIZE)
        self.hidden_dim = hidden_dim

    def forward(self, tokens: torch.Tensor, hidden: Optional[torch.Tensor] = None):
        out, hidden = self.gru(self.embed(tokens), hidden)
        return self.head(out), hidden


class LanguageModelBackend:
    """Frozen trained model + pure helpers the session layer drives."""

    def __init__(self, seed: int = 7, train_steps: int = 300,
                 chunk_len: int = 64, lr: float = 3e-3):
        torch.manual_seed(seed)
        torch.set_num_threads(1)
        self._net = CharGRU()
        self._train(train_steps, chunk_len, lr)
        self._net.eval()
        for p in self._net.parameters():
            p.requires_grad_(False)
        self.model_id = f"chargru:seed={seed},steps={train_steps}," \
                        f"w={self._weights_digest()}"

    def _train(self, steps: int, chunk_len: int, lr: float) -> None:
        data = torch.tensor(list(_BUILTIN_CORPUS.encode("utf-8")), dtype=torch.long)
        opt = torch.optim.Adam(self._net.parameters(), lr=lr)
        loss_fn = nn.CrossEntropyLoss()
        n = len(data) - chunk_len - 1
        self._net.train()
        for step in range(steps):
            start = (step * 997) % n  # deterministic stride, no RNG in the loop
            chunk = data[start:start + chunk_len + 1]
            inputs = chunk[:-1].unsqueeze(0)
            targets = chunk[1:]
            logits, _ = self._net(inputs)
            loss = loss_fn(logits.squeeze(0), targets)
            opt.zero_grad()
            loss.backward()
            opt.step()

    def _weights_digest(self) -> str:
        digest = hashlib.sha256()
        for name, p in sorted(self._net.state_dict().items()):
            digest.update(name.encode())
            digest.update(p.numpy().tobytes())
        return digest.hexdigest()[:12]

    @property
    def vocab_size(self) -> int:
        return VOCAB_SIZE

    def initial_state(self) -> torch.Tensor:
        return torch.zeros(1, 1, self._net.hidden_dim)

    def advance(self, state: torch.Tensor, token: int) -> torch.Tensor:
        """Next recurrent state after consuming one token.

        Always one token at a time: priming a context and advancing
        token-by-token must produce identical states.
        """
        with torch.no_grad():
            tok = torch.tensor([[token]], dtype=torch.long)
            _, new_state = self._net(tok, state)
        return new_state

    def next_probs(self, state: torch.Tensor) -> np.ndarray:
        """P(next token | state), as float64 for stable quantization."""
        with torch.no_grad():
            hidden = state[-1, 0] if state is not None else self.initial_state()[-1, 0]
            logits = self._net.head(hidden)
            probs = torch.softmax(logits.double(), dim=-1)
        return probs.numpy()
