#!/usr/bin/env python3
"""Compare geopatch logits with Hugging Face GPT-2 on a random small model."""

import argparse
import json
import subprocess
import sys
import tempfile

import torch
from transformers import GPT2Config, GPT2LMHeadModel

sys.path.insert(0, __import__("os").path.dirname(__file__))
from convert_gpt2 import convert  # noqa: E402


def check(cli, model, tokens, out_dir, tol):
    with torch.no_grad():
        want = model(torch.tensor([tokens])).logits[0].double()
    names = ["--name-map", f"{out_dir}/names.json"]
    got = subprocess.run(
        [cli, "model", "logits", "--weights", f"{out_dir}/weights.safetensors",
         "--model-config", f"{out_dir}/config.json", *names, "--tokens", ",".join(map(str, tokens))],
        check=True, capture_output=True, text=True).stdout
    got = torch.tensor(json.loads(got)["logits"], dtype=torch.float64)
    err = (got - want).abs().max().item()
    return err <= tol, err


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cli", required=True)
    ap.add_argument("--converter", help="unused; kept for the test registration")
    args = ap.parse_args()

    torch.manual_seed(0)
    ok = True
    for tied in (True, False):
        cfg = GPT2Config(n_layer=3, n_embd=32, n_head=4, n_positions=24, vocab_size=61,
                         tie_word_embeddings=tied, activation_function="gelu_new",
                         resid_pdrop=0.0, embd_pdrop=0.0, attn_pdrop=0.0)
        model = GPT2LMHeadModel(cfg).eval()
        with torch.no_grad():
            for p in model.parameters():
                p.add_(0.05 * torch.randn_like(p))
        with tempfile.TemporaryDirectory() as out_dir:
            convert(model, out_dir, torch.float32)
            for tokens in ([0], [5, 17, 33, 60, 2, 2, 9], list(range(24))):
                passed, err = check(args.cli, model, tokens, out_dir, 1e-4)
                print(f"tied={tied} len={len(tokens)} max|diff|={err:.3e} {'ok' if passed else 'MISMATCH'}")
                ok &= passed
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
