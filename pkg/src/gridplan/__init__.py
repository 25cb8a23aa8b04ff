"""Planning of generation, storage and transmission under three electricity
market designs (peer-to-peer with product differentiation, pool, and mixed
bilateral/pool), solved both as a centralized linear program and by a
distributed ADMM negotiation between prosumers, the TSO and the market
operators."""
