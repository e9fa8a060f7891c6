"""Portfolio cash flows, netting and collateral."""
