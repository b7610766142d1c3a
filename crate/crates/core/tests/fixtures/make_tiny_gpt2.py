"""Regenerates tests/fixtures/tiny_gpt2: a 2-layer, 16-wide GPT-2 with
deterministic weights, a byte-level BPE tokenizer without merges, and
reference hidden states computed by `transformers`."""

import json
import math
import pathlib

import torch
from tokenizers import Tokenizer, models, pre_tokenizers, decoders
from transformers import GPT2Config, GPT2Model

OUT = pathlib.Path(__file__).parent / "tiny_gpt2"


def wave(n, offset, scale):
    return [scale * math.sin(0.731 * i + offset) for i in range(n)]


def main():
    byte_chars = pre_tokenizers.ByteLevel.alphabet()
    vocab = {c: i for i, c in enumerate(sorted(byte_chars))}
    vocab["<|endoftext|>"] = len(vocab)
    tok = Tokenizer(models.BPE(vocab=vocab, merges=[]))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    OUT.mkdir(parents=True, exist_ok=True)
    tok.save(str(OUT / "tokenizer.json"))

    cfg = GPT2Config(vocab_size=len(vocab), n_positions=512, n_embd=16, n_layer=2, n_head=2, bos_token_id=256, eos_token_id=256,
                     resid_pdrop=0.0, embd_pdrop=0.0, attn_pdrop=0.0)
    model = GPT2Model(cfg).eval()
    with torch.no_grad():
        for t, (name, p) in enumerate(sorted(model.named_parameters())):
            base = 1.0 if (".ln_" in name or name.startswith("ln_")) and name.endswith("weight") else 0.0
            vals = torch.tensor(wave(p.numel(), 0.37 * t, 0.1), dtype=torch.float32)
            p.copy_(vals.reshape(p.shape) + base)
    model.save_pretrained(OUT, safe_serialization=True)

    text = "min value -0.250, trend is upward"
    ids = tok.encode(text).ids
    k, t, d = 2, 7, cfg.n_embd
    emb = torch.tensor(wave(k * t * d, 0.5, 0.8), dtype=torch.float32).reshape(k, t, d)
    with torch.no_grad():
        hidden = model(inputs_embeds=emb).last_hidden_state
    ref = {
        "text": text,
        "ids": ids,
        "input_shape": [k, t, d],
        "input_wave": {"offset": 0.5, "scale": 0.8},
        "hidden": hidden.flatten().tolist(),
    }
    (OUT / "reference.json").write_text(json.dumps(ref, indent=1) + "\n")


if __name__ == "__main__":
    main()
