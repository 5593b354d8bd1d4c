"""Dual-latent-variable personalized dialogue generation at desk scale."""

from .config import Config, load_config, save_config
from .corpus import (Corpus, Dialogue, DialogueExample, Persona, Turn,
                     generate_corpus, load_personachat, persona_consistency_proxy)
from .latent import (GaussianParams, LatentNetwork, gaussian_from_net,
                     kl_diag_gaussian, reparameterize, variance_reg_p, variance_reg_r)
from .lexsel import LexScore, distinct_n, mattr, mtld, select_response, ttr
from .model import (Candidate, CandidateSet, DecoderModel, LatentNets,
                    beam_search, encode_sequence, forward_logits,
                    generate_candidates, inject_latent)
from .tensor import Tensor, adam_step, backward, grad_check
from .text import Vocab, tokenize_text
from .training import BowHead, LossBreakdown, bow_loss, compute_loss, train

__version__ = "0.1.0"
