"""Final loss of the parameter-server engine as staleness grows, on least squares."""
import argparse

from mixfp.asgd import DivergedError, TrainConfig, make_least_squares, sgd_param_server


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--taus", default="0,1,2,4,8,16,32,64")
    p.add_argument("--lrs", default="0.01,0.05,0.2,0.5")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    lsq = make_least_squares(1000, 20, noise=0.1, seed=args.seed)
    obj = lsq.objective()
    print(f"# optimum loss {lsq.opt_loss:.6g}")
    print("lr,tau,final_excess_loss")
    for lr in map(float, args.lrs.split(",")):
        for tau in map(int, args.taus.split(",")):
            cfg = TrainConfig(learning_rate=lr, epochs=args.epochs, batch_size=10, staleness=tau, seed=args.seed)
            try:
                excess = f"{sgd_param_server(obj, cfg).losses[-1] - lsq.opt_loss:.3e}"
            except DivergedError as e:
                excess = f"diverged@{e.epoch}"
            print(f"{lr},{tau},{excess}")


if __name__ == "__main__":
    main()
