#!/usr/bin/env python3
"""HTTP sidecar exposing a HuggingFace causal LM to the `real:` backend.

The C++ client speaks a small JSON protocol:

  POST /v1/descriptor      {"model_id"}                      -> model metadata
  POST /v1/forward         {"model_id", "ids", "layer"}      -> hidden states at
                           the requested layer (1-based) for every position,
                           plus next-token logits after the final position
  POST /v1/input_gradient  {"model_id", "ids", "position",
                            "layer", "loss"}                 -> d loss / d relaxed
                           token-selection coefficients at `position`
  POST /v1/token_text      {"model_id", "ids"}               -> decoded strings

Run with e.g.

  python tools/serve_real_backend.py --port 8631 --device cpu

and point the pipeline at `real:<model_id>` (optionally set
ASSOCLAB_BACKEND_URL). Models are loaded lazily on first use and cached.
"""

import argparse
import logging
import threading

import torch
import torch.nn.functional as F
import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel
from transformers import AutoModelForCausalLM, AutoTokenizer

log = logging.getLogger("assoclab.server")

app = FastAPI(title="assoclab model server")
_lock = threading.Lock()
_cache: dict[str, tuple] = {}
_device = "cpu"


def load(model_id: str):
    with _lock:
        if model_id not in _cache:
            log.info("loading %s on %s", model_id, _device)
            tok = AutoTokenizer.from_pretrained(model_id)
            model = AutoModelForCausalLM.from_pretrained(
                model_id, torch_dtype=torch.float32
            )
            model.to(_device).eval()
            _cache[model_id] = (tok, model)
    return _cache[model_id]


class DescriptorRequest(BaseModel):
    model_id: str


class ForwardRequest(BaseModel):
    model_id: str
    ids: list[int]
    layer: int


class GradientRequest(BaseModel):
    model_id: str
    ids: list[int]
    position: int
    layer: int
    loss: dict


class TokenTextRequest(BaseModel):
    model_id: str
    ids: list[int]


def hidden_at_layer(outputs, layer: int) -> torch.Tensor:
    # outputs.hidden_states[0] is the embedding layer; `layer` is 1-based.
    states = outputs.hidden_states
    if layer < 1 or layer >= len(states):
        raise HTTPException(400, f"layer {layer} out of range 1..{len(states) - 1}")
    return states[layer][0]  # (seq, dim)


@app.post("/v1/descriptor")
def descriptor(req: DescriptorRequest):
    tok, model = load(req.model_id)
    cfg = model.config
    bos = tok.bos_token_id if tok.bos_token_id is not None else 0
    special = sorted({i for i in tok.all_special_ids if i is not None} | {bos})
    return {
        "vocab_size": cfg.vocab_size,
        "layer_count": cfg.num_hidden_layers,
        "max_context": getattr(cfg, "max_position_embeddings", 4096),
        "hidden_dim": cfg.hidden_size,
        "has_bos": tok.bos_token_id is not None,
        "bos_id": bos,
        "special_ids": special,
        "revision": getattr(cfg, "_commit_hash", "") or "",
    }


@app.post("/v1/forward")
def forward(req: ForwardRequest):
    tok, model = load(req.model_id)
    ids = torch.tensor([req.ids], dtype=torch.long, device=_device)
    with torch.no_grad():
        out = model(ids, output_hidden_states=True)
    hidden = hidden_at_layer(out, req.layer)
    return {
        "hidden": hidden.double().tolist(),
        "logits": out.logits[0, -1].double().tolist(),
    }


def loss_from_wire(spec: dict, hidden: torch.Tensor, logits: torch.Tensor):
    if spec.get("type") == "pair_cosine":
        a = hidden[spec["pos_a"]]
        b = hidden[spec["pos_b"]]
        cos = F.cosine_similarity(a.unsqueeze(0), b.unsqueeze(0)).squeeze(0)
        return (spec["target"] - cos) ** 2
    raise HTTPException(400, f"unsupported loss type: {spec.get('type')}")


@app.post("/v1/input_gradient")
def input_gradient(req: GradientRequest):
    tok, model = load(req.model_id)
    embed = model.get_input_embeddings()
    vocab = model.config.vocab_size
    if not 0 <= req.position < len(req.ids):
        raise HTTPException(400, "position out of range")

    # Relax the token choice at `position` to a weight vector over the
    # vocabulary, evaluated at the one-hot selection.
    weights = torch.zeros(vocab, dtype=torch.float32, device=_device)
    weights[req.ids[req.position]] = 1.0
    weights.requires_grad_(True)

    ids = torch.tensor([req.ids], dtype=torch.long, device=_device)
    embeds = embed(ids).clone()
    embeds[0, req.position] = weights @ embed.weight
    out = model(inputs_embeds=embeds, output_hidden_states=True)
    loss = loss_from_wire(req.loss, hidden_at_layer(out, req.layer), out.logits[0, -1])
    loss.backward()
    return {"grad": weights.grad.double().tolist()}


@app.post("/v1/token_text")
def token_text(req: TokenTextRequest):
    tok, _ = load(req.model_id)
    return {"texts": [tok.decode([i]) for i in req.ids]}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8631)
    parser.add_argument("--device", default="cpu", help="cpu, cuda, cuda:0, ...")
    parser.add_argument("--preload", help="model id to load at startup")
    args = parser.parse_args()

    global _device
    _device = args.device
    logging.basicConfig(level=logging.INFO)
    if args.preload:
        load(args.preload)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")


if __name__ == "__main__":
    main()
