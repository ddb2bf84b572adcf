"""
Linear probing with scarce labels
=================================

The encoder is frozen and a single linear layer is fitted on its
token-averaged features, using 10% or 100% of the training labels.
A randomly initialised encoder is probed alongside the pretrained one.
"""

# %%
from supreme.embeddings import StubEmbedder
from supreme.model import ModelConfig, init_model
from supreme.synthetic import DEFAULT_TERMS, make_sinusoid_task
from supreme.train import EcgDataset, TrainConfig, linear_probe, pretrain

task = make_sinusoid_task(n=300, seed=1)
data = EcgDataset(task.x, task.y)
train, val, test = data.subset(range(160)), data.subset(range(160, 220)), data.subset(range(220, 300))

config = ModelConfig(leads=4, samples=400, patch_len=50, vit_width=32, vit_depth=2, vit_heads=4, latent=32,
                     query_hidden=64, cfn_depth=2, cfn_heads=4, dropout=0.0, droppath=0.0, embed_dim=64,
                     init="fan_in")
random_encoder = init_model(config, seed=1)
pretrained = init_model(config, seed=1)
pretrain(pretrained, train, val, StubEmbedder(64).embed_many(list(DEFAULT_TERMS)),
         TrainConfig(batch_size=8, max_epochs=12, patience=4))

# %%
# With 160 training records, 10% is 16 labelled examples.
for name, model in (("random", random_encoder), ("pretrained", pretrained)):
    for fraction in (0.1, 1.0):
        report = linear_probe(model, train, val, test, fraction, class_names=list(DEFAULT_TERMS))
        print(f"{name:10s} fraction {fraction:4.0%}  test mean AUC {report.mean_auc:.4f}")
