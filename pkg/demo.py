"""Demo"""

import asyncio
import logging

from skcov.const import EVENT_CELL_COMPLETE, EVENT_INSTANCE_COMPLETE
from skcov.errors import SkcovError
from skcov.event import CellCompletedEvent, InstanceCompletedEvent
from skcov.experiments import ExperimentConfig, ExperimentRunner
from skcov.observables import predicted_residual_constant

logging.basicConfig(level=logging.INFO)


async def main():
    """Main entry point."""
    config = ExperimentConfig(
        kind="residual-sweep", n_list=[8, 10, 12], beta_list=[0.5], samples=50
    )

    def instance_completed(event: InstanceCompletedEvent):
        """Handle a finished disorder instance."""
        if event.index % 10 == 0:
            print(f"n={event.n} instance {event.index} took {event.elapsed:.3f~P}")

    def cell_completed(event: CellCompletedEvent):
        """Handle a finished cell."""
        print("Cell done:", event, "statistics:", ", ".join(event.statistics))

    try:
        async with ExperimentRunner(config) as runner:
            runner.on(EVENT_INSTANCE_COMPLETE, instance_completed)
            runner.on(EVENT_CELL_COMPLETE, cell_completed)
            report = await runner.run()
    except SkcovError as ex:
        print(ex)
        return

    target = predicted_residual_constant(0.5)
    for cell in report.cells:
        stat = cell.statistics["resid_frob_sq"].stat
        print(
            f"n={cell.n}: ||P - I||_F^2 = {stat.mean:.4f} +- {stat.stderr:.4f}"
            f" (large-n value {target:.4f})"
        )
    # wall clock is a Pint quantity
    print("Wall clock:", report.wall_clock.to("ms"))
    print("Flags:", report.flags)


if __name__ == "__main__":
    asyncio.run(main())
