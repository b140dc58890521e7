"""Point mode: embed located table rows, then predict a held-out index from the embeddings.

Each row is a place with a latitude, a longitude and a set of indicator
columns. A handful of "health" columns are combined into a signed z-score
index and kept away from the encoder; the encoder sees only the other columns,
and triplets come from geography alone (neighbors are the 5 nearest places).
Run with ``python demos/point_mode.py``; it takes a few seconds.
"""

from tilembed.evaluation import format_table
from tilembed.pointvec import (
    evaluate_point_embeddings,
    generate_points,
    non_health_names,
    sample_point_triplets,
    train_point_encoder,
    zscore,
)
from tilembed.training import TrainConfig

data, index = generate_points(n=100, seed=0)
inputs, _ = zscore(data.columns(non_health_names(data, index)))
print(f"{len(data)} places, {inputs.shape[1]} encoder inputs, {len(index.names)} columns in the index")

triplets = sample_point_triplets(data, 10000, k=5, seed=0)
params, config, report = train_point_encoder(inputs, triplets, hidden_dim=32, d=10,
                                             train_config=TrainConfig(margin=1.0, epochs=20, seed=0))
print(f"triplet loss: {report.mean_loss[0]:.3f} after epoch 1, {report.mean_loss[-1]:.3f} after epoch 20")

# Three feature sets, two regressors each, hyperparameters picked on a small grid.
reports = evaluate_point_embeddings(data, params, config, index, folds=3, trials=5, seed=0)
rows = [(f"{fs} / {model}", rep.config["dim"], rep.config["selected"], f"{rep.mean:.3f}")
        for (fs, model), rep in reports.items()]
print()
print(format_table(["features / model", "dim", "selected", "r2"], rows))

# The index varies smoothly but nonlinearly with location, so a linear model on
# raw coordinates does poorly while neighbor averaging on any of the feature
# sets does well.
