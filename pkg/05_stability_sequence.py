import sys
import logging
from src.cli import run

# Configuración de logs
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s',
    datefmt='%H:%M:%S'
)

def main():
    """
    Paso 5: sucesión de normas truncadas y veredicto (heurístico) de estabilidad.

    Ejemplo:
        python 05_stability_sequence.py --spec specs/gaussian.spec --horizons 5,10,20,40 --step 0.1
    """
    logging.info("--- INICIO PASO 5: SUCESIÓN DE ESTABILIDAD ---")
    code = run(["stability", *sys.argv[1:]])
    if code == 0:
        logging.info("--- PASO 5 COMPLETADO ---")
    sys.exit(code)

if __name__ == "__main__":
    main()
