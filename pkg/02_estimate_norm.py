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
    Paso 2: estimar la norma (inf,1) de un kernel en una malla.
    Enumeración exacta si la malla es pequeña, reinicios aleatorios si no.

    Ejemplo:
        python 02_estimate_norm.py --spec specs/tc.spec --horizon 20 --step 0.01
    """
    logging.info("--- INICIO PASO 2: ESTIMACIÓN DE LA NORMA ---")
    code = run(["norm", *sys.argv[1:]])
    if code == 0:
        logging.info("--- PASO 2 COMPLETADO ---")
    elif code == 2:
        logging.error("❌ Malla demasiado grande para la enumeración exacta")
    sys.exit(code)

if __name__ == "__main__":
    main()
