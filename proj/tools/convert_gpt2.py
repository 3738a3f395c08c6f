#!/usr/bin/env python3
"""Convert a Hugging Face GPT-2 checkpoint into geopatch's input files.

Writes weights.safetensors (checkpoint tensor names, with the fused attention
projection split into q/k/v), names.json (checkpoint name -> canonical name),
config.json, and the tokenizer's vocab.json / merges.txt when available.
"""

import argparse
import json
import os
import shutil

import torch
from safetensors.torch import save_file
from transformers import GPT2LMHeadModel


def convert(model, out_dir, dtype):
    cfg = model.config
    sd = model.transformer.state_dict()
    d = cfg.n_embd
    tensors = {}
    names = {}

    def put(src_name, canonical, tensor):
        tensors[src_name] = tensor.detach().to(dtype).contiguous()
        names[src_name] = canonical

    put("wte.weight", "embed.W", sd["wte.weight"])
    put("wpe.weight", "pos.W", sd["wpe.weight"])
    for i in range(cfg.n_layer):
        h = f"h.{i}."
        L = f"layer.{i}."
        put(h + "ln_1.weight", L + "ln1.g", sd[h + "ln_1.weight"])
        put(h + "ln_1.bias", L + "ln1.b", sd[h + "ln_1.bias"])
        w = sd[h + "attn.c_attn.weight"]  # Conv1D: [in, 3 * out]
        b = sd[h + "attn.c_attn.bias"]
        for j, part in enumerate("qkv"):
            put(f"{h}attn.{part}.weight", f"{L}attn.W{part}", w[:, j * d:(j + 1) * d])
            put(f"{h}attn.{part}.bias", f"{L}attn.b{part}", b[j * d:(j + 1) * d])
        put(h + "attn.c_proj.weight", L + "attn.Wo", sd[h + "attn.c_proj.weight"])
        put(h + "attn.c_proj.bias", L + "attn.bo", sd[h + "attn.c_proj.bias"])
        put(h + "ln_2.weight", L + "ln2.g", sd[h + "ln_2.weight"])
        put(h + "ln_2.bias", L + "ln2.b", sd[h + "ln_2.bias"])
        put(h + "mlp.c_fc.weight", L + "mlp.Win", sd[h + "mlp.c_fc.weight"])
        put(h + "mlp.c_fc.bias", L + "mlp.bin", sd[h + "mlp.c_fc.bias"])
        put(h + "mlp.c_proj.weight", L + "mlp.Wout", sd[h + "mlp.c_proj.weight"])
        put(h + "mlp.c_proj.bias", L + "mlp.bout", sd[h + "mlp.c_proj.bias"])
    put("ln_f.weight", "final_ln.g", sd["ln_f.weight"])
    put("ln_f.bias", "final_ln.b", sd["ln_f.bias"])

    tied = model.lm_head.weight.data_ptr() == model.transformer.wte.weight.data_ptr()
    if not tied:
        put("lm_head.weight", "unembed.W", model.lm_head.weight.t())

    activation = {"gelu_new": "gelu_tanh", "gelu_pytorch_tanh": "gelu_tanh", "gelu": "gelu_exact"}
    if cfg.activation_function not in activation:
        raise SystemExit(f"unsupported activation {cfg.activation_function}")
    config = {
        "n_layers": cfg.n_layer,
        "d_model": d,
        "n_heads": cfg.n_head,
        "d_head": d // cfg.n_head,
        "d_mlp": cfg.n_inner or 4 * d,
        "vocab_size": cfg.vocab_size,
        "max_seq": cfg.n_positions,
        "norm_eps": cfg.layer_norm_epsilon,
        "activation": activation[cfg.activation_function],
        "tie_embeddings": bool(tied),
    }

    os.makedirs(out_dir, exist_ok=True)
    save_file(tensors, os.path.join(out_dir, "weights.safetensors"))
    with open(os.path.join(out_dir, "names.json"), "w") as f:
        json.dump(names, f, indent=1)
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(config, f, indent=2)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", required=True, help="Hugging Face model directory or hub id")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--dtype", choices=["f32", "f16", "bf16"], default="f32")
    args = ap.parse_args()

    dtype = {"f32": torch.float32, "f16": torch.float16, "bf16": torch.bfloat16}[args.dtype]
    model = GPT2LMHeadModel.from_pretrained(args.model)
    convert(model, args.out, dtype)
    for name in ("vocab.json", "merges.txt"):
        src = os.path.join(args.model, name)
        if os.path.exists(src):
            shutil.copy(src, os.path.join(args.out, name))


if __name__ == "__main__":
    main()
