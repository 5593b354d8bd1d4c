"""Train a small dual-latent model and generate scored candidates.

Uses a reduced corpus and model so the whole script runs in about a
minute on one CPU core. Shows the loss breakdown per epoch, then
generates N candidates for a test context and prints the diversity
scores that drive selection.
"""

import numpy as np

from latentchat.config import Config
from latentchat.corpus import generate_corpus
from latentchat.model import generate_candidates
from latentchat.training import train

cfg = Config(variant="dlvgen", d_model=32, d_ff=64, layers=2, heads=2,
             d_latent=8, vocab_size=300, max_len=64, batch=8, epochs=10,
             lr=3e-3, seed=0, n_candidates=3)
corpus = generate_corpus(n_personas=6, n_dialogues=60, seed=0)


def progress(epoch, bd, test_recon):
    print(f"epoch {epoch:2d}  recon {bd.recon_nll:.3f}  "
          f"kl_p {bd.kl_persona:.3f}  kl_r {bd.kl_response:.3f}  "
          f"bow {bd.bow_nll:.3f}  test recon {test_recon:.3f}")


result = train(corpus, cfg, progress=progress)

example = corpus.test_examples()[0]
print("\ncontext:")
for turn in example.context:
    print(f"  {turn.speaker:>5}: {turn.text}")
print(f"  gold agent reply: {example.response}")

rng = np.random.default_rng(0)
cs = generate_candidates(result.model, result.nets, result.vocab,
                         example.context, cfg, rng, n=3)
print("\ncandidates (one latent sample each, * = selected):")
for i, c in enumerate(cs.candidates):
    mark = "*" if i == cs.selected_index else " "
    print(f" {mark} combined={c.combined:.3f}  {c.text!r}")
