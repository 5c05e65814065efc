"""Bus link travel-time inference, heteroscedastic log-normal fitting with
Fisher-information uncertainty bounds, and Markov-chain remaining-time
prediction from GTFS static and real-time position data."""

__version__ = "0.1.0"
