"""Train the blob classifier under each GEMM mode and engine; compare test accuracy."""
import argparse
import time

from mixfp.asgd import ENGINES, TrainConfig
from mixfp.mlp import DenseNet, accuracy, make_blobs, net_objective


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--modes", default="exact32,threeterm,fourterm,naive16")
    p.add_argument("--engines", default="sync,hogwild")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    train, test = make_blobs(300, 3, 2, args.separation, seed=args.seed)
    print("engine,mode,final_loss,test_accuracy,seconds")
    for engine in args.engines.split(","):
        workers = 4 if engine == "hogwild" else 1
        for mode in args.modes.split(","):
            net = DenseNet.init([2, 16, 3], seed=args.seed, gemm_mode=mode)
            cfg = TrainConfig(learning_rate=0.1, epochs=args.epochs, batch_size=16, workers=workers, seed=args.seed)
            t0 = time.perf_counter()
            trace = ENGINES[engine](net_objective(net, train), cfg)
            acc = accuracy(net.with_params(trace.params), test)
            print(f"{engine},{mode},{trace.losses[-1]:.4g},{acc:.4f},{time.perf_counter() - t0:.2f}")


if __name__ == "__main__":
    main()
