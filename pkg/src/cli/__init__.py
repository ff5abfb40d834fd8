# CLI module for the ion-trap simulator
